
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use edsl::datagen::{generate, SynthConfig};
use edsl::loss::loss_gradient;
use edsl::protocol::transport::run_tcp_worker;
use edsl::protocol::{run_edsl, EdslMaster, EdslSettings, InProcessTransport, LambdaSchedule, TcpMasterTransport, WorkerNode};
use edsl::prox_solver::SolverConfig;
use edsl::{DenseVector, LossSpec};
use proptest::prelude::*;

fn settings() -> EdslSettings {
    EdslSettings { schedule: LambdaSchedule::practical(1.0), solver: SolverConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn shift_identity(seed in 0u64..1000, m in 2usize..6) {
        let (ds, _) = generate(&SynthConfig { seed, ..SynthConfig::new(30, 12, m, 3) }).unwrap();
        let spec = LossSpec::squared();
        let beta = DenseVector::new((0..12).map(|k| (k as f64 * 0.37).sin()).collect()).unwrap();
        let mut master = EdslMaster::new(ds.master(), spec, settings(), InProcessTransport::new(&ds, spec));
        let (shift, own, avg) = master.shift(0, &beta).unwrap();
        let reference: Vec<f64> = (0..12).map(|k| {
            ds.shards().iter().map(|s| loss_gradient(&spec, s, &beta).unwrap()[k]).sum::<f64>() / m as f64
        }).collect();
        for k in 0..12 {
            prop_assert!((own[k] + shift[k] - avg[k]).abs() <= 4.0 * f64::EPSILON * avg[k].abs().max(own[k].abs()).max(1.0));
            prop_assert!((avg[k] - reference[k]).abs() <= 1e-14 * reference[k].abs().max(1.0));
        }
    }
}

#[test]
fn trace_starts_at_local_fit_and_reports_errors() {
    let (ds, truth) = generate(&SynthConfig { seed: 3, ..SynthConfig::new(100, 40, 4, 4) }).unwrap();
    let trace = run_edsl(&ds, LossSpec::squared(), settings(), 4, Some(&truth), None).unwrap();
    assert_eq!(trace.records.len(), 5);
    assert_eq!(trace.records[0].round, 0);
    assert!(trace.records.iter().all(|r| r.l2_error.is_some() && r.l1_error.is_some()));
    let lambdas: Vec<f64> = trace.records.iter().map(|r| r.lambda).collect();
    assert!(lambdas.windows(2).all(|w| w[1] <= w[0]), "{lambdas:?}");
}

#[test]
fn tcp_threads_match_in_process() {
    let (ds, _) = generate(&SynthConfig { seed: 11, ..SynthConfig::new(60, 20, 3, 3) }).unwrap();
    let spec = LossSpec::squared();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let workers: Vec<_> = (1..3)
        .map(|j| {
            let node = WorkerNode::new(Arc::new(ds.shard(j).clone()), spec);
            thread::spawn(move || run_tcp_worker(addr, &node, Duration::from_secs(10)))
        })
        .collect();
    let transport = TcpMasterTransport::accept(&listener, 3, 20, Duration::from_secs(10)).unwrap();
    let remote = EdslMaster::new(ds.master(), spec, settings(), transport).run(3).unwrap();
    for w in workers {
        assert_eq!(w.join().unwrap().unwrap(), 3);
    }
    let local = run_edsl(&ds, spec, settings(), 3, None, None).unwrap();
    for (a, b) in remote.records.iter().zip(&local.records) {
        assert_eq!(a.beta, b.beta);
        assert_eq!(a.payload_bytes, b.payload_bytes);
    }
}

#[test]
fn tcp_master_times_out_without_workers() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let err = TcpMasterTransport::accept(&listener, 2, 5, Duration::from_millis(200)).err().expect("no worker connects");
    assert_eq!(err.exit_code(), 5);
}

#[test]
fn worker_with_wrong_dimension_is_rejected() {
    let (ds, _) = generate(&SynthConfig { seed: 1, ..SynthConfig::new(20, 8, 2, 2) }).unwrap();
    let (other, _) = generate(&SynthConfig { seed: 1, ..SynthConfig::new(20, 9, 2, 2) }).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let node = WorkerNode::new(Arc::new(other.shard(1).clone()), LossSpec::squared());
    let worker = thread::spawn(move || run_tcp_worker(addr, &node, Duration::from_secs(5)));
    let transport = TcpMasterTransport::accept(&listener, 2, ds.p(), Duration::from_secs(5)).unwrap();
    let res = EdslMaster::new(ds.master(), LossSpec::squared(), settings(), transport).run(1);
    assert!(res.is_err());
    drop(listener);
    let _ = worker.join();
}

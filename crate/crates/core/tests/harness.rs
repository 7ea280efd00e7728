use std::io::{BufRead, BufReader};
use std::path::Path;
use std::thread;
use std::time::Duration;

use csd_sim::harness::{
    index_file, Coordinator, CoordinatorOptions, Endpoint, HarnessReport, Listener, SharedIndexFile, Stream,
    WireMessage, WorkMode, WorkerConfig, WorkerExit, worker_loop,
};
use csd_sim::simulator::run;
use csd_sim::topology::{NodeId, NodeKind, NodeSpec};
use csd_sim::{ClusterConfig, RateTable, SchedulerConfig, SchedulerState, WorkloadProfile};

fn profile(total: u64, host: f64, csd: f64) -> WorkloadProfile {
    WorkloadProfile {
        name: "synthetic".into(),
        total_items: total,
        dataset_input_bytes: total * 1000,
        avg_output_bytes_per_item: 10.0,
        host_rates: RateTable::flat(host).unwrap(),
        csd_rates: RateTable::flat(csd).unwrap(),
        host_only_rate: None,
    }
}

fn spawn_fleet(
    ep: &Endpoint,
    cluster: &ClusterConfig,
    p: &WorkloadProfile,
    cfg: &SchedulerConfig,
    workdir: &Path,
) -> Vec<thread::JoinHandle<csd_sim::Result<WorkerExit>>> {
    cluster
        .nodes()
        .iter()
        .map(|&node| {
            let wc = WorkerConfig::from_profile(ep.clone(), node, p, cfg, 1.0, workdir.to_path_buf(), WorkMode::Sleep)
                .unwrap();
            thread::spawn(move || worker_loop(&wc))
        })
        .collect()
}

fn live_run(cluster: &ClusterConfig, p: &WorkloadProfile, cfg: &SchedulerConfig) -> HarnessReport {
    let dir = tempfile::tempdir().unwrap();
    let ep = Endpoint::Unix(dir.path().join("coord.sock"));
    let coord = Coordinator::bind(&ep).unwrap();
    let workers = spawn_fleet(&ep, cluster, p, cfg, dir.path());
    let report = coord.run(cluster, p, cfg, &CoordinatorOptions::new(dir.path())).unwrap();
    for w in workers {
        assert_eq!(w.join().unwrap().unwrap(), WorkerExit::Drained);
    }
    assert!(index_file::list(dir.path()).unwrap().is_empty());
    report
}

#[test]
fn live_run_conserves_items_and_replays_exactly() {
    // host batches take 0.267 s and drive batches 0.333 s: completions are
    // distinct and fall well clear of the 0.2 s tick grid, so wall-clock
    // jitter cannot reorder acks or push one past a tick
    let cluster = ClusterConfig::new(2).unwrap();
    let p = profile(120, 150.0, 12.0);
    let cfg = SchedulerConfig::new(4, 10.0);
    let report = live_run(&cluster, &p, &cfg);
    assert!(report.valid, "{:?}", report.abort_reason);
    assert_eq!(report.per_node_items.values().sum::<u64>(), 120);
    assert_eq!(report.ledger.iter().map(|a| a.count).sum::<u64>(), 120);
    assert!(report.leftover_index_files.is_empty());
    assert_eq!(report.worker_stats.len(), 3);

    let replayed = SchedulerState::replay(120, cluster.nodes(), cfg, &report.events).unwrap();
    assert_eq!(replayed.assignments(), report.ledger.as_slice());
    assert!(replayed.is_complete());

    let sim = run(&cluster, &p, &cfg).unwrap();
    let err = (report.throughput - sim.throughput).abs() / sim.throughput;
    assert!(err < 0.10, "live {} vs simulated {}", report.throughput, sim.throughput);
}

#[test]
fn single_worker_makespan_tracks_simulation() {
    // 20 batches of 0.5 s, each followed by a wait for the next 0.2 s tick:
    // 19 * 0.6 + 0.5 = 11.9 s rather than the tick-free 10 s
    let cluster = ClusterConfig::new(0).unwrap();
    let p = profile(1000, 100.0, 1.0);
    let cfg = SchedulerConfig::new(50, 1.0);
    let report = live_run(&cluster, &p, &cfg);
    assert!(report.valid);
    let sim = run(&cluster, &p, &cfg).unwrap();
    assert!((sim.makespan - 11.9).abs() < 1e-6);
    assert!((report.makespan_s - sim.makespan).abs() / sim.makespan < 0.10, "{}", report.makespan_s);
}

#[test]
fn zero_items_drain_immediately() {
    let cluster = ClusterConfig::new(2).unwrap();
    let mut p = profile(1, 100.0, 10.0);
    p.total_items = 0;
    let report = live_run(&cluster, &p, &SchedulerConfig::new(4, 10.0));
    assert!(report.valid);
    assert!(report.ledger.is_empty());
    assert_eq!(report.throughput, 0.0);
    assert_eq!(report.worker_stats.len(), 3);
}

// Accepts one worker connection and consumes its HELLO and first ACK.
fn fake_coordinator(dir: &Path, node: NodeSpec) -> (thread::JoinHandle<csd_sim::Result<WorkerExit>>, Stream, BufReader<Stream>) {
    let ep = Endpoint::Unix(dir.join("fake.sock"));
    let listener = Listener::bind(&ep).unwrap();
    let wc = WorkerConfig {
        endpoint: ep,
        node,
        rate: 1000.0,
        workload: "synthetic".into(),
        workdir: dir.to_path_buf(),
        mode: WorkMode::Sleep,
        connect_attempts: 20,
        retry_delay: Duration::from_millis(20),
    };
    let worker = thread::spawn(move || worker_loop(&wc));
    let stream = loop {
        if let Some(s) = listener.try_accept().unwrap() {
            break s;
        }
        thread::sleep(Duration::from_millis(5));
    };
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    assert!(matches!(line.parse().unwrap(), WireMessage::Hello { .. }));
    line.clear();
    reader.read_line(&mut line).unwrap();
    assert_eq!(line.parse::<WireMessage>().unwrap(), WireMessage::Ack { node_id: node.id, batch_id: None });
    (worker, stream, reader)
}

fn read_msg(reader: &mut BufReader<Stream>) -> WireMessage {
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    line.parse().unwrap()
}

#[test]
fn drain_before_first_assign_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let node = NodeSpec { id: NodeId::csd(1), kind: NodeKind::Csd };
    let (worker, mut stream, mut reader) = fake_coordinator(dir.path(), node);
    stream.send_line("DRAIN").unwrap();
    assert!(matches!(read_msg(&mut reader), WireMessage::Stats(_)));
    assert_eq!(worker.join().unwrap().unwrap(), WorkerExit::Drained);
}

#[test]
fn zero_count_assign_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let node = NodeSpec { id: NodeId::csd(1), kind: NodeKind::Csd };
    let (worker, mut stream, mut reader) = fake_coordinator(dir.path(), node);
    stream.send_line("ASSIGN 0 0 0").unwrap();
    assert!(matches!(read_msg(&mut reader), WireMessage::Err(_)));
    assert!(worker.join().unwrap().is_err());
}

#[test]
fn worker_processes_assign_and_deletes_index() {
    let dir = tempfile::tempdir().unwrap();
    let node = NodeSpec { id: NodeId::HOST, kind: NodeKind::Host };
    let (worker, mut stream, mut reader) = fake_coordinator(dir.path(), node);
    let idx = SharedIndexFile { batch_id: 7, start_index: 30, count: 5, workload: "synthetic".into() };
    idx.write(dir.path()).unwrap();
    stream.send_line("ASSIGN 7 30 5").unwrap();
    assert_eq!(read_msg(&mut reader), WireMessage::Ack { node_id: NodeId::HOST, batch_id: Some(7) });
    assert!(index_file::list(dir.path()).unwrap().is_empty());
    stream.send_line("STATS_REQ").unwrap();
    match read_msg(&mut reader) {
        WireMessage::Stats(v) => assert_eq!(v["items"], 5),
        other => panic!("unexpected {other}"),
    }
    stream.send_line("DRAIN").unwrap();
    assert!(matches!(read_msg(&mut reader), WireMessage::Stats(_)));
    assert_eq!(worker.join().unwrap().unwrap(), WorkerExit::Drained);
}

#[test]
fn assign_without_index_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let node = NodeSpec { id: NodeId::csd(2), kind: NodeKind::Csd };
    let (worker, mut stream, mut reader) = fake_coordinator(dir.path(), node);
    stream.send_line("ASSIGN 3 0 4").unwrap();
    assert!(matches!(read_msg(&mut reader), WireMessage::Err(_)));
    assert!(worker.join().unwrap().is_err());
}

#[test]
fn unreachable_coordinator_is_a_clean_exit() {
    let dir = tempfile::tempdir().unwrap();
    let wc = WorkerConfig {
        endpoint: Endpoint::Unix(dir.path().join("nobody.sock")),
        node: NodeSpec { id: NodeId::csd(1), kind: NodeKind::Csd },
        rate: 1.0,
        workload: "synthetic".into(),
        workdir: dir.path().to_path_buf(),
        mode: WorkMode::Sleep,
        connect_attempts: 3,
        retry_delay: Duration::from_millis(10),
    };
    assert_eq!(worker_loop(&wc).unwrap(), WorkerExit::ConnectionLost);
}

#[test]
fn coordinator_rejects_unknown_messages_and_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let ep = Endpoint::Unix(dir.path().join("coord.sock"));
    let coord = Coordinator::bind(&ep).unwrap();
    let cluster = ClusterConfig::new(1).unwrap();
    let p = profile(10, 10.0, 1.0);
    let opts = CoordinatorOptions { workdir: dir.path().to_path_buf(), worker_timeout: Duration::from_millis(800) };
    let handle = {
        let cluster = cluster.clone();
        thread::spawn(move || coord.run(&cluster, &p, &SchedulerConfig::new(2, 2.0), &opts))
    };
    let mut client = Stream::connect(&ep).unwrap();
    let mut reader = BufReader::new(client.try_clone().unwrap());
    client.send_line("BOGUS 1 2").unwrap();
    assert!(matches!(read_msg(&mut reader), WireMessage::Err(_)));
    client.send_line("HELLO csd9 csd 1").unwrap();
    assert!(matches!(read_msg(&mut reader), WireMessage::Err(_)));

    let report = handle.join().unwrap().unwrap();
    assert!(!report.valid);
    assert!(report.abort_reason.unwrap().contains("HELLO"));
    assert!(report.ledger.is_empty());
}

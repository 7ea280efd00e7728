use std::collections::BTreeSet;

use proptest::prelude::*;

use csd_sim::energy::{energy_per_item, report as energy_report, wall_power};
use csd_sim::reproduce::BENCHMARKS;
use csd_sim::scheduler::{calibrate_ratio, RatioPolicy};
use csd_sim::simulator::event::{EventKind, EventQueue};
use csd_sim::simulator::{run, simulate};
use csd_sim::topology::{DataPathSpec, NodeId, NodeKind, NodeSpec, PowerModel, DEFAULT_MAX_CSDS};
use csd_sim::transfer::{account, csd_fraction_paired};
use csd_sim::workload::{builtin_profile, BUILTIN_PROFILES};
use csd_sim::{ClusterConfig, RateTable, SchedulerConfig, WorkloadProfile};

fn flat_profile(total: u64, host: f64, csd: f64) -> WorkloadProfile {
    WorkloadProfile {
        name: "random".into(),
        total_items: total,
        dataset_input_bytes: total * 512,
        avg_output_bytes_per_item: 64.0,
        host_rates: RateTable::flat(host).unwrap(),
        csd_rates: RateTable::flat(csd).unwrap(),
        host_only_rate: None,
    }
}

fn scenario() -> impl Strategy<Value = (WorkloadProfile, ClusterConfig, SchedulerConfig)> {
    (1u64..5_000, 1.0f64..500.0, 0.5f64..50.0, 0usize..12, 1u64..64, 1.0f64..40.0, 1u64..400).prop_map(
        |(total, host, csd, n, b, r, poll_ms)| {
            let mut cfg = SchedulerConfig::new(b, r);
            cfg.poll_interval = poll_ms as f64 / 1000.0;
            (flat_profile(total, host, csd), ClusterConfig::new(n).unwrap(), cfg)
        },
    )
}

fn monotone_table() -> impl Strategy<Value = RateTable> {
    prop::collection::btree_map(1u64..1_000_000, 0.1f64..10.0, 1..8).prop_map(|m| {
        let mut rate = 0.0;
        let entries = m
            .into_iter()
            .map(|(b, step)| {
                rate += step;
                (b, rate)
            })
            .collect();
        RateTable::new(entries).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn event_queue_pops_in_strict_total_order(
        events in prop::collection::vec((0u64..50, any::<bool>(), 0u32..4, 0u64..10), 1..200)
    ) {
        let mut q = EventQueue::new();
        for (t, tick, node, id) in events {
            let kind = if tick {
                EventKind::PollTick(id)
            } else {
                EventKind::BatchComplete { node: NodeId(node), batch_id: id }
            };
            q.push(t * 100, kind);
        }
        let mut prev = q.pop().unwrap();
        let mut seqs = BTreeSet::from([prev.seq]);
        while let Some(ev) = q.pop() {
            prop_assert!(prev < ev);
            prop_assert!(prev.time <= ev.time);
            if prev.time == ev.time && matches!(prev.kind, EventKind::PollTick(_)) {
                prop_assert!(matches!(ev.kind, EventKind::PollTick(_)));
            }
            prop_assert!(seqs.insert(ev.seq));
            prev = ev;
        }
    }

    #[test]
    fn simulation_conserves_items_without_migration((p, cluster, cfg) in scenario()) {
        let sim = simulate(&cluster, &p, &cfg).unwrap();
        let per_node: u64 = sim.report.per_node_items.iter().map(|n| n.items).sum();
        prop_assert_eq!(per_node, p.total_items);
        let mut next = 0;
        for (i, a) in sim.ledger.iter().enumerate() {
            prop_assert_eq!(a.batch_id, i as u64);
            prop_assert_eq!(a.start_index, next);
            prop_assert!(a.count >= 1);
            prop_assert!(a.count <= cfg.batch_size_for(cluster.kind_of(a.node_id).unwrap()));
            next += a.count;
            let rec = &sim.batches[i];
            prop_assert_eq!(rec.assignment, *a);
        }
        prop_assert_eq!(next, p.total_items);
    }

    #[test]
    fn assign_times_sit_on_the_tick_grid((p, cluster, cfg) in scenario()) {
        let sim = simulate(&cluster, &p, &cfg).unwrap();
        let poll = cfg.poll_interval_nanos();
        for a in &sim.ledger {
            let ns = (a.assign_time(&cfg) * 1e9).round() as u64;
            prop_assert_eq!(ns % poll, 0, "batch {} at {} ns", a.batch_id, ns);
        }
    }

    #[test]
    fn simulation_is_bit_deterministic((p, cluster, cfg) in scenario()) {
        let a = serde_json::to_string(&run(&cluster, &p, &cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&run(&cluster, &p, &cfg).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn rate_lookup_monotone_and_exact_at_knots(table in monotone_table(), probes in prop::collection::vec(1u64..2_000_000, 2..20)) {
        for &(b, r) in table.entries() {
            prop_assert_eq!(table.lookup(b), r);
        }
        let mut probes = probes;
        probes.sort_unstable();
        for w in probes.windows(2) {
            prop_assert!(table.lookup(w[0]) <= table.lookup(w[1]));
        }
    }

    #[test]
    fn random_profiles_round_trip(
        total in 1u64..10_000_000,
        bytes in 0u64..1u64 << 40,
        out in 0.0f64..1e6,
        host in monotone_table(),
        csd in monotone_table(),
        base in prop::option::of(0.1f64..1e5),
    ) {
        let p = WorkloadProfile {
            name: "round_trip".into(),
            total_items: total,
            dataset_input_bytes: bytes,
            avg_output_bytes_per_item: out,
            host_rates: host,
            csd_rates: csd,
            host_only_rate: base,
        };
        prop_assert_eq!(WorkloadProfile::from_json(&p.to_json().unwrap()).unwrap(), p);
    }

    #[test]
    fn accounting_is_linear(host in 0u64..1_000_000, csd in 0u64..1_000_000) {
        prop_assume!(host + csd > 0);
        let p = builtin_profile("speech_to_text").unwrap().with_total_items(host + csd);
        let p2 = p.with_total_items(2 * (host + csd));
        let one = account(&p, &[(NodeKind::Host, host), (NodeKind::Csd, csd)]).unwrap();
        let two = account(&p2, &[(NodeKind::Host, 2 * host), (NodeKind::Csd, 2 * csd)]).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
        // dataset bytes are rounded to whole bytes when rescaled
        let per_item = p2.avg_input_bytes_per_item() / p.avg_input_bytes_per_item();
        prop_assert!(close(two.bytes_input_to_host, 2.0 * one.bytes_input_to_host * per_item));
        prop_assert!(close(two.bytes_retained_in_csd, 2.0 * one.bytes_retained_in_csd * per_item));
        prop_assert!(close(two.bytes_output_total, 2.0 * one.bytes_output_total));
        prop_assert!(close(two.bytes_output_to_host, 2.0 * one.bytes_output_to_host));
    }

    #[test]
    fn paired_fraction_in_unit_interval(host in 1e-3f64..1e6, extra in 0.0f64..1e7) {
        let f = csd_fraction_paired(host + extra, host).unwrap();
        prop_assert!((0.0..1.0).contains(&f));
    }

    #[test]
    fn energy_per_item_strictly_decreasing(w in 1.0f64..2000.0, t in 1e-3f64..1e6, dt in 1e-3f64..1e6) {
        prop_assert!(energy_per_item(w, t + dt).unwrap() < energy_per_item(w, t).unwrap());
    }

    #[test]
    fn wall_power_is_exactly_linear(base in 100.0f64..1000.0, per in 0.0f64..5.0, k in 0u32..=36) {
        let power = PowerModel {
            idle_base_w: 50.0,
            idle_per_csd_w: 1.0,
            active_total_no_isp_w: base,
            active_per_isp_w: per,
            num_csds_reference: 36,
        };
        prop_assert_eq!(wall_power(&power, k).unwrap(), base + f64::from(k) * per);
    }

    #[test]
    fn host_only_normalizes_to_one(t in 1e-3f64..1e6) {
        let e = energy_report(&PowerModel::default(), 0, t, t).unwrap();
        prop_assert_eq!(e.normalized_to_host_only, 1.0);
        prop_assert_eq!(e.savings_percent, 0.0);
    }

    #[test]
    fn duplicate_ids_and_extra_hosts_rejected(n in 1u32..10, dup in 1u32..10) {
        let dup = dup.min(n);
        let mut nodes: Vec<NodeSpec> = (1..=n).map(|i| NodeSpec { id: NodeId::csd(i), kind: NodeKind::Csd }).collect();
        nodes.push(NodeSpec { id: NodeId::HOST, kind: NodeKind::Host });
        let ok = ClusterConfig::from_nodes(nodes.clone(), DataPathSpec::default(), PowerModel::default(), DEFAULT_MAX_CSDS);
        prop_assert!(ok.is_ok());
        let mut with_dup = nodes.clone();
        with_dup.push(NodeSpec { id: NodeId::csd(dup), kind: NodeKind::Csd });
        prop_assert!(ClusterConfig::from_nodes(with_dup, DataPathSpec::default(), PowerModel::default(), DEFAULT_MAX_CSDS).is_err());
        let mut two_hosts = nodes;
        two_hosts.push(NodeSpec { id: NodeId::HOST, kind: NodeKind::Host });
        prop_assert!(ClusterConfig::from_nodes(two_hosts, DataPathSpec::default(), PowerModel::default(), DEFAULT_MAX_CSDS).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    // Without migration a slow drive can take the last batch and finish
    // after the host would have, so an extra drive may cost throughput.
    // The loss is bounded by one drive batch plus one poll interval.
    #[test]
    fn extra_drive_costs_at_most_one_batch(host in 20.0f64..500.0, csd in 1.0f64..20.0, b in 4u64..40) {
        let (r, _) = calibrate_ratio(host, csd, RatioPolicy::Round).unwrap();
        let cfg = SchedulerConfig::new(b, r as f64);
        let p = flat_profile(200_000, host, csd);
        let slack = b as f64 / csd + cfg.poll_interval + 1e-9;
        let mut prev = run(&ClusterConfig::new(0).unwrap(), &p, &cfg).unwrap().makespan;
        for n in 1..=36 {
            let m = run(&ClusterConfig::new(n).unwrap(), &p, &cfg).unwrap().makespan;
            prop_assert!(m <= prev + slack, "N={n}: {m} > {prev} + {slack}");
            prev = m;
        }
    }
}

#[test]
fn tail_anomaly_example() {
    // the drive acks 10 ms before the host on the last full cycle and takes
    // a 6 s batch that the host would have finished in 0.04 s
    let (host, csd) = (358.352_005_642_911_4, 2.476_749_778_536_592);
    let (r, _) = calibrate_ratio(host, csd, RatioPolicy::Round).unwrap();
    let cfg = SchedulerConfig::new(15, r as f64);
    let p = flat_profile(200_000, host, csd);
    let t0 = run(&ClusterConfig::new(0).unwrap(), &p, &cfg).unwrap().throughput;
    let t1 = run(&ClusterConfig::new(1).unwrap(), &p, &cfg).unwrap().throughput;
    assert!(t1 < t0);
    assert!(t1 > 0.999 * t0);
}

#[test]
fn builtin_profiles_round_trip() {
    for name in BUILTIN_PROFILES {
        let p = builtin_profile(name).unwrap();
        assert_eq!(WorkloadProfile::from_json(&p.to_json().unwrap()).unwrap(), p);
    }
}

#[test]
fn long_runs_ledger_and_paired_fraction_agree() {
    for bench in BENCHMARKS {
        let r = run(&bench.cluster().unwrap(), &bench.profile().unwrap(), &bench.scheduler()).unwrap();
        let paired = r.csd_fraction_paired.unwrap();
        assert!((r.csd_fraction - paired).abs() < 0.03, "{}: {} vs {paired}", bench.workload, r.csd_fraction);
    }
}

#[test]
fn energy_per_item_falls_as_drives_are_added() {
    let p = builtin_profile("speech_to_text").unwrap().with_total_items(50_000);
    let cfg = SchedulerConfig::new(6, 20.0);
    let base = ClusterConfig::new(0).unwrap();
    let mut prev = f64::INFINITY;
    for n in (4..=36).step_by(4) {
        let e = run(&base.with_csd_count(n).unwrap(), &p, &cfg).unwrap().energy.energy_per_item_mj;
        assert!(e < prev, "N={n}: {e} >= {prev}");
        prev = e;
    }
}

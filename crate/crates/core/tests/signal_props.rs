use std::path::Path;

use ecgnode::dsp::{detect, match_outcomes, score, DetectorConfig, PeakEvent};
use ecgnode::procnet::{build_network, Message, OperatingMode, TaskId};
use ecgnode::power::NodeConfig;
use ecgnode::trace_io::{
    format_annotations, format_trace, parse_annotations, parse_trace, synth_trace, BeatAnnotation, EcgTrace, LabelSet,
    SynthParams,
};
use proptest::prelude::*;

fn origin() -> &'static Path {
    Path::new("<test>")
}

proptest! {
    #[test]
    fn trace_text_round_trips(samples in proptest::collection::vec(any::<i16>(), 1..200), rate in 1u32..2000) {
        let t = EcgTrace::new(rate as f64, samples, "rec").unwrap();
        let text = format_trace(&t);
        let back = parse_trace(&text, origin()).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(format_trace(&back), text);
    }

    #[test]
    fn annotations_round_trip_sorted(mut idx in proptest::collection::btree_set(0usize..100_000, 0..50)) {
        let anns: Vec<BeatAnnotation> = std::mem::take(&mut idx)
            .into_iter()
            .rev()
            .enumerate()
            .map(|(k, i)| BeatAnnotation::new(i, ['N', 'L', 'R', 'A', 'V'][k % 5]))
            .collect();
        let parsed = parse_annotations(&format_annotations(&anns), LabelSet::Nlrav, origin()).unwrap();
        prop_assert!(parsed.windows(2).all(|w| w[0].peak_index < w[1].peak_index));
        prop_assert_eq!(parsed.len(), anns.len());
    }

    #[test]
    fn synthetic_spacing_is_exact(bpm in 20.0f64..300.0, secs in 2.0f64..20.0, seed in any::<u64>()) {
        let p = SynthParams::new(bpm, secs, 330.0, 5.0, seed);
        let (_, anns) = synth_trace(&p).unwrap();
        let spacing = (330.0f64 * 60.0 / bpm).round() as usize;
        prop_assert!(anns.windows(2).all(|w| w[1].peak_index - w[0].peak_index == spacing));
    }

    #[test]
    fn detector_events_respect_refractory(bpm in 40.0f64..200.0, noise in 0.0f64..60.0, seed in any::<u64>()) {
        let cfg = DetectorConfig::default();
        let (t, _) = synth_trace(&SynthParams::new(bpm, 12.0, 330.0, noise, seed)).unwrap();
        let events = detect(&cfg, &t).unwrap();
        for w in events.windows(2) {
            prop_assert!(w[1].peak_index > w[0].peak_index);
            prop_assert!(w[1].peak_index - w[0].peak_index >= cfg.refractory_samples());
            prop_assert_eq!(w[1].rr_samples, Some(w[1].peak_index - w[0].peak_index));
        }
        for e in &events {
            prop_assert_eq!(e.bpm.is_some(), e.rr_samples.is_some());
        }
    }

    #[test]
    fn score_counts_partition(
        events in proptest::collection::btree_set(0usize..5000, 0..40),
        anns in proptest::collection::btree_set(0usize..5000, 0..40),
        tol in 0usize..100,
    ) {
        let events: Vec<PeakEvent> = events
            .into_iter()
            .map(|peak_index| PeakEvent { peak_index, rr_samples: None, bpm: None })
            .collect();
        let anns: Vec<BeatAnnotation> = anns.into_iter().map(|i| BeatAnnotation::new(i, 'N')).collect();
        let s = score(&events, &anns, tol);
        prop_assert_eq!(s.tp + s.fn_, anns.len());
        prop_assert_eq!(s.tp + s.fp, events.len());
        let m = match_outcomes(&events, &anns, tol);
        prop_assert_eq!(m.score(), s);
    }

    #[test]
    fn reconfiguration_conserves_messages(n in 0usize..16, target in 0usize..3) {
        let modes = [OperatingMode::RawData, OperatingMode::PeakDetection, OperatingMode::CnnProcessing];
        let mut net = build_network(OperatingMode::CnnProcessing, &NodeConfig::default(), 16).unwrap();
        let fifo = net.output_of_mut(TaskId::GetData).unwrap();
        for i in 0..n {
            fifo.push(Message::Sample { index: i as u64, t: 0, value: 0 }).unwrap();
        }
        let before = net.queued();
        let target = modes[target];
        match net.reconfigure(target) {
            Ok(_) => {
                prop_assert_eq!(net.queued(), before);
                prop_assert_eq!(net.edges(), target.edges());
                net.check_topology().unwrap();
            }
            Err(_) => {
                // refused: a removed edge still held messages
                prop_assert!(n > 0);
                prop_assert_eq!(net.mode(), OperatingMode::CnnProcessing);
                prop_assert_eq!(net.queued(), before);
            }
        }
    }
}

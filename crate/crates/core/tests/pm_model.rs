use std::collections::HashMap;

use dumbolab_core::pm::{FlushCompletion, LogFormat, Pm, PmLayout, RegionId};
use proptest::prelude::*;

const LINE: u64 = 64;
const WORDS: u64 = 32;

#[derive(Debug, Clone)]
enum Step {
    Write { thread: usize, word: u64 },
    Flush { thread: usize, line: u64, lag: u64 },
    Fence { thread: usize },
    Advance(u64),
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        4 => (0..2usize, 0..WORDS).prop_map(|(thread, word)| Step::Write { thread, word }),
        3 => (0..2usize, 0..WORDS * 8 / LINE, 0..400u64).prop_map(|(thread, line, lag)| Step::Flush { thread, line, lag }),
        1 => (0..2usize).prop_map(|thread| Step::Fence { thread }),
        1 => (0..500u64).prop_map(Step::Advance),
    ]
}

fn layout() -> PmLayout {
    PmLayout {
        line_size: LINE,
        heap_bytes: WORDS * 8,
        log_bytes: LINE,
        marker_bytes: LINE,
        marker_slots: 1,
        threads: 2,
        log_format: LogFormat::None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    /// Volatile reads match a plain map, durable words only move forward in
    /// write order, crash images only hold written values, and a clean
    /// shutdown persists everything.
    #[test]
    fn pm_matches_reference(steps in prop::collection::vec(step(), 1..60), on_fence in any::<bool>()) {
        let completion = if on_fence { FlushCompletion::OnFence } else { FlushCompletion::AfterLatency };
        let mut pm = Pm::new(layout(), 310, completion);
        let mut reference: HashMap<u64, u64> = HashMap::new();
        let mut now = 0u64;
        let mut seq = 0u64;
        let mut durable_seen = vec![0u64; WORDS as usize];
        for s in steps {
            match s {
                Step::Write { thread, word } => {
                    seq += 1;
                    let v = (seq << 8) | thread as u64;
                    pm.write_word(RegionId::Heap, word * 8, v).unwrap();
                    reference.insert(word, v);
                }
                Step::Flush { thread, line, lag } => {
                    pm.flush_line_async(thread, RegionId::Heap, line, now + lag).unwrap();
                }
                Step::Fence { thread } => {
                    now = pm.drain_fence(thread, now);
                    pm.advance(now);
                    prop_assert!(!pm.has_pending(thread));
                }
                Step::Advance(dt) => {
                    now += dt;
                    pm.advance(now);
                }
            }
            for w in 0..WORDS {
                let v = pm.read_volatile(RegionId::Heap, w * 8).unwrap();
                prop_assert_eq!(v, reference.get(&w).copied().unwrap_or(0));
                let d = pm.read_durable(RegionId::Heap, w * 8).unwrap();
                prop_assert!(d >> 8 >= durable_seen[w as usize] >> 8, "durable word {} went backwards", w);
                durable_seen[w as usize] = d;
            }
        }
        let state = pm.crash_state(0);
        if state.in_flight() <= 6 {
            for img in state.images() {
                for w in 0..WORDS {
                    let v = img.read(RegionId::Heap, w * 8).unwrap();
                    prop_assert!(v >> 8 <= seq);
                    prop_assert!(v >> 8 >= durable_seen[w as usize] >> 8 || v == durable_seen[w as usize]);
                }
            }
        }
        let img = pm.shutdown_image();
        for w in 0..WORDS {
            prop_assert_eq!(img.read(RegionId::Heap, w * 8).unwrap(), reference.get(&w).copied().unwrap_or(0));
        }
    }
}

//! Randomized round-trip properties for the serialization layers: wire
//! frames, queue addresses and distribution literals. Each property pits
//! the encoder against the decoder on generated inputs, including empty
//! fields and unusual but legal values.

use proptest::prelude::*;

use dms_core::dist::Dist;
use dms_core::time::SimTime;
use dms_core::transport::frame;
use dms_core::transport::{MessageKind, QueueAddress, TimestampedMessage};

fn kind_strategy() -> impl Strategy<Value = MessageKind> {
    prop_oneof![
        Just(MessageKind::Data),
        Just(MessageKind::Null),
        Just(MessageKind::End),
    ]
}

fn time_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![
        Just(0.0),
        0.0..1e12f64,
        // Exact dyadic times, the kind constant transfer delays produce.
        (0u64..1_000_000u64).prop_map(|n| n as f64 * 0.125),
    ]
}

prop_compose! {
    fn message_strategy()(
        kind in kind_strategy(),
        t in time_strategy(),
        label in "[ -~]{0,80}",
        body in "[0-9]{0,12}",
        seq in any::<u64>(),
    ) -> TimestampedMessage {
        TimestampedMessage { kind, timestamp: SimTime::new(t), label, body, seq }
    }
}

proptest! {
    #[test]
    fn frames_round_trip(msg in message_strategy()) {
        let bytes = frame::encode(&msg);
        prop_assert_eq!(bytes.len(), frame::encoded_len(&msg));
        let (back, used) = frame::decode(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(back, msg);
    }

    #[test]
    fn frame_streams_split_on_exact_boundaries(
        msgs in prop::collection::vec(message_strategy(), 1..20)
    ) {
        let mut wire = Vec::new();
        for m in &msgs {
            wire.extend_from_slice(&frame::encode(m));
        }
        let mut cursor = std::io::Cursor::new(wire);
        for m in &msgs {
            let got = frame::read_frame(&mut cursor).unwrap().unwrap();
            prop_assert_eq!(&got, m);
        }
        prop_assert_eq!(frame::read_frame(&mut cursor).unwrap(), None);
    }

    #[test]
    fn truncated_frames_never_parse(msg in message_strategy(), cut in 0usize..200) {
        let bytes = frame::encode(&msg);
        prop_assume!(cut < bytes.len());
        prop_assert!(frame::decode(&bytes[..cut]).is_err());
    }
}

#[test]
fn multibyte_labels_survive_the_wire() {
    let msg = TimestampedMessage {
        kind: MessageKind::Data,
        timestamp: SimTime::new(3.5),
        label: "пресс-β-線".to_string(),
        body: "1000".to_string(),
        seq: 7,
    };
    let bytes = frame::encode(&msg);
    let (back, used) = frame::decode(&bytes).unwrap();
    assert_eq!(back, msg);
    assert_eq!(used, bytes.len());
}

prop_compose! {
    fn addr_strategy()(
        host in "[a-zA-Z0-9][a-zA-Z0-9.-]{0,30}",
        port in prop::option::of(1u16..),
        queue in "[a-zA-Z0-9][a-zA-Z0-9._-]{0,30}",
    ) -> QueueAddress {
        QueueAddress { host, port, queue }
    }
}

proptest! {
    #[test]
    fn queue_addresses_round_trip_canonically(addr in addr_strategy()) {
        let back = QueueAddress::parse(&addr.canonical()).unwrap();
        prop_assert_eq!(back, addr);
    }
}

fn dist_strategy() -> impl Strategy<Value = Dist> {
    prop_oneof![
        (0.0..1e6f64).prop_map(Dist::Constant),
        (0.0..1e6f64, 0.0..1e6f64).prop_map(|(a, w)| Dist::Uniform(a, a + w)),
        (1e-6..1e6f64).prop_map(Dist::Exponential),
        (0.0..1e6f64, 0.0..1e6f64, 1e-6..1e6f64)
            .prop_map(|(a, w1, w2)| Dist::Triangular(a, a + w1, a + w1 + w2)),
    ]
}

proptest! {
    #[test]
    fn distributions_round_trip_through_text(d in dist_strategy()) {
        let back = Dist::parse(&d.to_string()).unwrap();
        prop_assert_eq!(back, d);
    }

    // One raw draw per variate, always inside the declared support.
    #[test]
    fn samples_never_leave_the_support(d in dist_strategy(), seed in any::<u64>()) {
        let mut rng = dms_core::rng::RngStream::from_seed(seed);
        for _ in 0..32 {
            let x = d.sample(&mut rng);
            prop_assert!(x.is_finite());
            prop_assert!(x >= d.lower_bound() - 1e-9, "{} drew {}", d, x);
            match d {
                Dist::Uniform(_, b) | Dist::Triangular(_, _, b) => {
                    prop_assert!(x <= b + 1e-9)
                }
                _ => {}
            }
        }
    }
}

use gatefaas_core::codec::{decode_frame, encode_frame, CodecError};
use gatefaas_core::{Value, ValueMap};
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::Int),
        prop::num::f64::NORMAL
            .prop_union(prop::num::f64::SUBNORMAL)
            .or(prop::num::f64::ZERO)
            .prop_map(Value::Float),
        "\\PC{0,12}".prop_map(Value::Str),
        "[\"\\\\\n\t\u{0}-\u{1f}]{0,4}".prop_map(Value::Str),
    ]
}

fn value() -> impl Strategy<Value = Value> {
    leaf().prop_recursive(4, 48, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(Value::List),
            prop::collection::btree_map("\\PC{0,8}", inner, 0..6).prop_map(Value::Map),
        ]
    })
}

fn value_map() -> impl Strategy<Value = ValueMap> {
    prop::collection::btree_map("[a-z]{0,6}", value(), 0..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn decode_inverts_encode(m in value_map()) {
        let frame = encode_frame(&m).unwrap();
        let (back, used) = decode_frame(&frame).unwrap();
        prop_assert_eq!(used, frame.len());
        prop_assert_eq!(encode_frame(&back).unwrap(), frame);
        prop_assert_eq!(back, m);
    }

    #[test]
    fn concatenated_frames_are_self_delimiting(ms in prop::collection::vec(value_map(), 1..5)) {
        let mut stream = Vec::new();
        for m in &ms {
            stream.extend(encode_frame(m).unwrap());
        }
        let mut rest = &stream[..];
        for m in &ms {
            let (back, used) = decode_frame(rest).unwrap();
            prop_assert_eq!(&back, m);
            rest = &rest[used..];
        }
        prop_assert!(rest.is_empty());
    }

    #[test]
    fn every_strict_prefix_is_incomplete(m in value_map()) {
        let frame = encode_frame(&m).unwrap();
        for cut in 0..frame.len() {
            let is_incomplete = matches!(decode_frame(&frame[..cut]), Err(CodecError::Incomplete { .. }));
            prop_assert!(is_incomplete);
        }
    }
}

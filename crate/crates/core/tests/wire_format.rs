use efsgd::wire::{
    decode, encode, encoded_len, read_stream, reconstruct, write_stream, BlockPayload,
    CompressedMessage,
};
use efsgd::{BlockPartition, Error, ParamVector};
use proptest::prelude::*;

fn signs(s: &str) -> Vec<bool> {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| c == '+')
        .collect()
}

fn hex(s: &str) -> Vec<u8> {
    s.split_whitespace()
        .map(|b| u8::from_str_radix(b, 16).unwrap())
        .collect()
}

#[test]
fn documented_single_block_dump() {
    let msg = CompressedMessage {
        worker: 1,
        iteration: 2,
        blocks: vec![BlockPayload {
            scale: 1.0,
            signs: signs("+-+-+-+-"),
        }],
    };
    let bytes = encode(&msg).unwrap();
    assert_eq!(
        bytes,
        hex("01 00 00 00 02 00 00 00 00 00 00 00 01 00 00 00 00 00 80 3f aa")
    );
    let partition = BlockPartition::new(&[8]).unwrap();
    assert_eq!(decode(&bytes, &partition).unwrap(), msg);
}

#[test]
fn documented_two_block_dump() {
    let partition = BlockPartition::new(&[3, 10]).unwrap();
    let msg = CompressedMessage {
        worker: 3,
        iteration: 258,
        blocks: vec![
            BlockPayload {
                scale: 0.5,
                signs: signs("++-"),
            },
            BlockPayload {
                scale: 2.0,
                signs: signs("-+++++++-+"),
            },
        ],
    };
    let bytes = encode(&msg).unwrap();
    assert_eq!(
        bytes,
        hex("03 00 00 00 02 01 00 00 00 00 00 00 02 00 00 00 00 00 00 3f c0 00 00 00 40 7f 40")
    );
    assert_eq!(bytes.len(), encoded_len(&partition));
    let v = reconstruct(&decode(&bytes, &partition).unwrap(), &partition).unwrap();
    assert_eq!(
        v.as_slice(),
        &[0.5, 0.5, -0.5, -2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, -2.0, 2.0]
    );
}

#[test]
fn padding_bits_are_ignored() {
    let partition = BlockPartition::new(&[3]).unwrap();
    let mut bytes = hex("00 00 00 00 00 00 00 00 00 00 00 00 01 00 00 00 00 00 80 3f c0");
    let clean = decode(&bytes, &partition).unwrap();
    bytes[20] |= 0x1f;
    assert_eq!(decode(&bytes, &partition).unwrap(), clean);
}

#[test]
fn rejects_bad_buffers() {
    let partition = BlockPartition::new(&[8]).unwrap();
    let good = hex("01 00 00 00 02 00 00 00 00 00 00 00 01 00 00 00 00 00 80 3f aa");
    assert!(matches!(
        decode(&good[..good.len() - 1], &partition),
        Err(Error::MalformedMessage(_))
    ));
    let mut longer = good.clone();
    longer.push(0);
    assert!(matches!(
        decode(&longer, &partition),
        Err(Error::MalformedMessage(_))
    ));
    let mut wrong_count = good.clone();
    wrong_count[12] = 2;
    assert!(matches!(
        decode(&wrong_count, &partition),
        Err(Error::MalformedMessage(_))
    ));
    let mut negative = good.clone();
    negative[19] = 0xbf;
    assert!(matches!(
        decode(&negative, &partition),
        Err(Error::InvalidMessage(_))
    ));
}

#[test]
fn zero_scale_reconstructs_zero() {
    let partition = BlockPartition::new(&[5]).unwrap();
    let msg = CompressedMessage::from_vector(&ParamVector::zeros(5), &partition, 0, 0).unwrap();
    let v = reconstruct(
        &decode(&encode(&msg).unwrap(), &partition).unwrap(),
        &partition,
    )
    .unwrap();
    assert!(v.iter().all(|&x| x == 0.0));
}

#[test]
fn stream_file_round_trip() {
    let partition = BlockPartition::new(&[4, 9]).unwrap();
    let msgs: Vec<CompressedMessage> = (0..3)
        .map(|t| {
            let v =
                ParamVector::from_vec((0..13).map(|i| (i as f64 - 6.0) * (t + 1) as f64).collect());
            CompressedMessage::from_vector(&v, &partition, 2, t).unwrap()
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stream.bin");
    write_stream(std::fs::File::create(&path).unwrap(), &msgs).unwrap();
    let raw = std::fs::read(&path).unwrap();
    assert_eq!(raw.len(), 3 * (8 + encoded_len(&partition)));
    assert_eq!(&raw[..8], &(encoded_len(&partition) as u64).to_le_bytes());
    assert_eq!(read_stream(raw.as_slice(), &partition).unwrap(), msgs);
    assert!(read_stream(&raw[..raw.len() - 1], &partition).is_err());
}

fn message_strategy() -> impl Strategy<Value = (Vec<usize>, CompressedMessage)> {
    prop::collection::vec(1usize..40, 1..6).prop_flat_map(|sizes| {
        let blocks: Vec<_> = sizes
            .iter()
            .map(|&s| (0.0f32..1e6, prop::collection::vec(any::<bool>(), s)))
            .collect();
        (Just(sizes), any::<u32>(), any::<u64>(), blocks).prop_map(|(sizes, w, t, blocks)| {
            let blocks = blocks
                .into_iter()
                .map(|(scale, signs)| BlockPayload { scale, signs })
                .collect();
            (
                sizes,
                CompressedMessage {
                    worker: w,
                    iteration: t,
                    blocks,
                },
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn round_trip_and_length((sizes, msg) in message_strategy()) {
        let partition = BlockPartition::new(&sizes).unwrap();
        let bytes = encode(&msg).unwrap();
        prop_assert_eq!(bytes.len(), encoded_len(&partition));
        prop_assert_eq!(8 * (bytes.len() - 16) as u64, msg.payload_bits());
        let back = decode(&bytes, &partition).unwrap();
        prop_assert_eq!(&back, &msg);
        prop_assert_eq!(encode(&back).unwrap(), bytes);
    }
}

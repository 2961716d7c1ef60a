use std::collections::HashMap;

use proptest::prelude::*;

use super::*;
use crate::copybook::parse_copybook;

fn fixture_table() -> Vec<(u8, u8)> {
    let text = include_str!("../../tests/fixtures/cp037.txt");
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split_whitespace().map(|h| u8::from_str_radix(h, 16).unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect()
}

fn fixture_map() -> HashMap<u8, u8> {
    fixture_table().into_iter().collect()
}

// Written out by hand: EBCDIC final bytes of a signed zoned field.
fn ebcdic_zoned_oracle(byte: u8) -> Option<(u8, i8)> {
    match byte {
        0xC0..=0xC9 => Some((byte - 0xC0, 1)),
        0xD0..=0xD9 => Some((byte - 0xD0, -1)),
        0xF0..=0xF9 => Some((byte - 0xF0, 1)),
        _ => None,
    }
}

// Packs decimal digits and a sign nibble, left-padding with a zero nibble.
fn pack_oracle(digits: &str, sign: u8) -> Vec<u8> {
    let mut nibbles: Vec<u8> = digits.bytes().map(|b| b - b'0').collect();
    nibbles.push(sign);
    if nibbles.len() % 2 == 1 {
        nibbles.insert(0, 0);
    }
    nibbles.chunks(2).map(|p| p[0] * 16 + p[1]).collect()
}

fn num(s: &str) -> FieldValue {
    FieldValue::Number(s.parse().unwrap())
}

fn spec(pic: &str) -> FieldSpec {
    let schema = parse_copybook(&format!("01 R. 05 F PIC {pic}.")).unwrap();
    schema.layouts()[0].fields[0].clone()
}

#[test]
fn fixture_matches_table() {
    let pairs = fixture_table();
    assert_eq!(pairs.len(), 256);
    for (e, l) in pairs {
        assert_eq!(cp037::EBCDIC_TO_LATIN1[e as usize], l, "EBCDIC {e:02X}");
        assert_eq!(LATIN1_TO_EBCDIC[l as usize], e, "Latin-1 {l:02X}");
    }
}

#[test]
fn packed_positive() {
    let f = spec("S9(5) COMP-3");
    let bytes = pack_oracle("12345", 0xC);
    assert_eq!(bytes, [0x12, 0x34, 0x5C]);
    assert_eq!(decode_field(&bytes, &f, Encoding::Ebcdic).unwrap(), num("12345"));
    assert_eq!(encode_field(&num("12345"), &f, Encoding::Ebcdic, OverflowPolicy::Strict).unwrap(), bytes);
}

#[test]
fn packed_zero_and_signs() {
    let f = spec("S9(3) COMP-3");
    assert_eq!(decode_field(&[0x00, 0x0C], &f, Encoding::Ebcdic).unwrap(), num("0"));
    assert_eq!(decode_field(&[0x14, 0x7D], &f, Encoding::Ebcdic).unwrap(), num("-147"));
    assert_eq!(decode_field(&[0x14, 0x7F], &f, Encoding::Ebcdic).unwrap(), num("147"));
    let u = spec("9(3) COMP-3");
    assert_eq!(encode_field(&num("147"), &u, Encoding::Ascii, OverflowPolicy::Strict).unwrap(), [0x14, 0x7F]);
    let scaled = spec("S9(5)V99 COMP-3");
    assert_eq!(decode_field(&pack_oracle("1234567", 0xD), &scaled, Encoding::Ebcdic).unwrap(), num("-12345.67"));
}

#[test]
fn packed_errors() {
    let f = spec("S9(3) COMP-3");
    assert_eq!(
        decode_field(&[0x1A, 0x0C], &f, Encoding::Ebcdic).unwrap_err(),
        CodecError::InvalidNibble { offset: 0, byte: 0x1A }
    );
    assert_eq!(
        decode_field(&[0x00, 0x0B], &f, Encoding::Ebcdic).unwrap_err(),
        CodecError::InvalidSignNibble { offset: 1, nibble: 0xB }
    );
    assert_eq!(
        decode_field(&[0x00], &f, Encoding::Ebcdic).unwrap_err(),
        CodecError::RecordTooShort { need: 2, have: 1 }
    );
}

#[test]
fn ebcdic_text() {
    let f = spec("X(3)");
    let table = fixture_map();
    let expected: String = [0xC1u8, 0xC2, 0xC3].iter().map(|b| table[b] as char).collect();
    assert_eq!(expected, "ABC");
    assert_eq!(decode_field(&[0xC1, 0xC2, 0xC3], &f, Encoding::Ebcdic).unwrap(), FieldValue::Text(expected));
    assert_eq!(
        encode_field(&FieldValue::Text("AB".into()), &f, Encoding::Ebcdic, OverflowPolicy::Strict).unwrap(),
        [0xC1, 0xC2, 0x40]
    );
}

#[test]
fn text_decode_keeps_padding() {
    let f = spec("X(4)");
    assert_eq!(decode_field(b"AB  ", &f, Encoding::Ascii).unwrap(), FieldValue::Text("AB  ".into()));
    assert_eq!(decode_field(b"AB  ", &f, Encoding::Ascii).unwrap().canonical_key(), "AB");
}

#[test]
fn text_overflow_and_unmappable() {
    let f = spec("X(2)");
    let long = FieldValue::Text("ABC".into());
    assert_eq!(encode_field(&long, &f, Encoding::Ascii, OverflowPolicy::LegacyTruncate).unwrap(), b"AB");
    assert_eq!(
        encode_field(&long, &f, Encoding::Ascii, OverflowPolicy::Strict).unwrap_err(),
        CodecError::TextTooLong { length: 3, max: 2 }
    );
    assert_eq!(
        encode_field(&FieldValue::Text("€".into()), &f, Encoding::Ebcdic, OverflowPolicy::LegacyTruncate).unwrap_err(),
        CodecError::UnmappableChar { ch: '€' }
    );
    assert!(matches!(
        encode_field(&num("1"), &f, Encoding::Ascii, OverflowPolicy::Strict),
        Err(CodecError::TypeMismatch { .. })
    ));
}

#[test]
fn zoned_negative_overpunch() {
    let f = spec("S9(3)");
    let bytes = [0xF1, 0xF4, 0xD7];
    let (d, sign) = ebcdic_zoned_oracle(0xD7).unwrap();
    assert_eq!((d, sign), (7, -1));
    assert_eq!(decode_field(&bytes, &f, Encoding::Ebcdic).unwrap(), num("-147"));
    assert_eq!(encode_field(&num("-147"), &f, Encoding::Ebcdic, OverflowPolicy::Strict).unwrap(), bytes);
    assert_eq!(encode_field(&num("-147"), &f, Encoding::Ascii, OverflowPolicy::Strict).unwrap(), b"14P");
    assert_eq!(decode_field(b"14G", &f, Encoding::Ascii).unwrap(), num("147"));
    assert_eq!(
        decode_field(&[0xF1, 0x40, 0xF7], &f, Encoding::Ebcdic).unwrap_err(),
        CodecError::InvalidZonedByte { offset: 1, byte: 0x40 }
    );
}

#[test]
fn every_signed_zoned_final_byte_matches_oracle() {
    let f = spec("S9(1)");
    for b in 0..=255u8 {
        let got = decode_field(&[b], &f, Encoding::Ebcdic).ok();
        let want = ebcdic_zoned_oracle(b).map(|(d, s)| num(&(d as i32 * s as i32).to_string()));
        assert_eq!(got, want, "byte {b:02X}");
    }
}

#[test]
fn overflow_truncates_or_errors() {
    let f = spec("9(2)");
    let legacy = encode_field(&num("147"), &f, Encoding::Ascii, OverflowPolicy::LegacyTruncate).unwrap();
    assert_eq!(legacy, b"47");
    assert_eq!(
        encode_field(&num("147"), &f, Encoding::Ebcdic, OverflowPolicy::LegacyTruncate).unwrap(),
        [0xF4, 0xF7]
    );
    let err = encode_field(&num("147"), &f, Encoding::Ascii, OverflowPolicy::Strict).unwrap_err();
    assert_eq!(err.name(), "OverflowError");
    for policy in [OverflowPolicy::LegacyTruncate, OverflowPolicy::Strict] {
        assert_eq!(encode_field(&num("99"), &f, Encoding::Ascii, policy).unwrap(), b"99");
    }
}

#[test]
fn strict_precision_and_sign() {
    let f = spec("9(3)V9");
    assert!(matches!(
        encode_field(&num("1.25"), &f, Encoding::Ascii, OverflowPolicy::Strict),
        Err(CodecError::PrecisionLoss { .. })
    ));
    assert_eq!(encode_field(&num("1.25"), &f, Encoding::Ascii, OverflowPolicy::LegacyTruncate).unwrap(), b"0012");
    assert!(matches!(
        encode_field(&num("-3"), &f, Encoding::Ascii, OverflowPolicy::Strict),
        Err(CodecError::SignLoss { .. })
    ));
    assert_eq!(encode_field(&num("-3"), &f, Encoding::Ascii, OverflowPolicy::LegacyTruncate).unwrap(), b"0030");
    // Trailing fractional zeros are not a loss.
    assert_eq!(encode_field(&num("1.20"), &f, Encoding::Ascii, OverflowPolicy::Strict).unwrap(), b"0012");
}

#[test]
fn binary_big_endian() {
    let f = spec("S9(4) COMP");
    assert_eq!(encode_field(&num("-2"), &f, Encoding::Ebcdic, OverflowPolicy::Strict).unwrap(), [0xFF, 0xFE]);
    assert_eq!(decode_field(&[0xFF, 0xFE], &f, Encoding::Ebcdic).unwrap(), num("-2"));
    let u = spec("9(9) BINARY");
    assert_eq!(encode_field(&num("305419896"), &u, Encoding::Ascii, OverflowPolicy::Strict).unwrap(), [0x12, 0x34, 0x56, 0x78]);
    assert_eq!(decode_field(&[0xFF, 0xFF, 0xFF, 0xFF], &u, Encoding::Ascii).unwrap(), num("4294967295"));
    let wide = spec("S9(18) COMP");
    let v = num("-999999999999999999");
    let bytes = encode_field(&v, &wide, Encoding::Ascii, OverflowPolicy::Strict).unwrap();
    assert_eq!(bytes, (-999_999_999_999_999_999i64).to_be_bytes());
    assert_eq!(decode_field(&bytes, &wide, Encoding::Ascii).unwrap(), v);
}

fn mixed_schema() -> CopybookSchema {
    parse_copybook(
        "01 MIXED.
            05 NAME     PIC X(4).
            05 DELTA    PIC S9(3).
            05 AMT      PIC S9(5) COMP-3.
            05 CNT      PIC 9(4) COMP.
            05 CODE     PIC 9(2).",
    )
    .unwrap()
}

#[test]
fn mixed_record_transcode() {
    let schema = mixed_schema();
    let table = fixture_map();
    let mut rec = vec![0xC1, 0xC2, 0x40, 0x5B]; // "AB $"
    rec.extend([0xF1, 0xF4, 0xD7]); // -147
    rec.extend([0x12, 0x34, 0x5C]); // +12345
    rec.extend([0x00, 0x4B]); // 75, same bit pattern as EBCDIC '.'
    rec.extend([0xF0, 0xF9]);
    let ascii = transcode_record(&rec, &schema, Direction::EbcdicToAscii).unwrap();
    let expected_text: Vec<u8> = rec[..4].iter().map(|b| table[b]).collect();
    assert_eq!(&ascii[..4], expected_text.as_slice());
    assert_eq!(&ascii[4..7], b"14P");
    assert_eq!(&ascii[7..12], &rec[7..12]);
    assert_eq!(&ascii[12..], b"09");
    let decoded = decode_record(&ascii, &schema, Encoding::Ascii).unwrap();
    assert_eq!(decoded, decode_record(&rec, &schema, Encoding::Ebcdic).unwrap());
    assert_eq!(decoded.get("AMT"), Some(&num("12345")));
    assert_eq!(decoded.get("CNT"), Some(&num("75")));
    assert_eq!(transcode_record(&ascii, &schema, Direction::AsciiToEbcdic).unwrap(), rec);
}

#[test]
fn transcode_rejects_bad_overpunch_and_short_records() {
    let schema = mixed_schema();
    let mut rec = vec![0x40; 14];
    rec[4..7].copy_from_slice(&[0xF0, 0xF0, 0x40]);
    assert_eq!(
        transcode_record(&rec, &schema, Direction::EbcdicToAscii).unwrap_err(),
        RecordError::UnmappableByte { offset: 6, byte: 0x40 }
    );
    assert!(matches!(
        transcode_record(&rec[..10], &schema, Direction::EbcdicToAscii),
        Err(RecordError::RecordLengthMismatch { need: 14, have: 10, .. })
    ));
}

#[test]
fn transcode_converts_slack_as_text() {
    let schema = parse_copybook("01 R. 05 A PIC X(2).").unwrap();
    let out = transcode_record(b"ABCD", &schema, Direction::AsciiToEbcdic).unwrap();
    assert_eq!(out, [0xC1, 0xC2, 0xC3, 0xC4]);
}

#[test]
fn decoded_record_serializes_in_layout_order() {
    let schema = parse_copybook("01 R. 05 Z PIC X. 05 A PIC S9V9.").unwrap();
    let d = decode_record(b"Q1R", &schema, Encoding::Ascii).unwrap();
    assert_eq!(serde_json::to_string(&d).unwrap(), r#"{"layout":"R","fields":{"Z":{"text":"Q"},"A":{"number":"-1.9"}}}"#);
}

#[test]
fn display_escapes() {
    assert_eq!(FieldValue::Text("A\u{1}\\ ".into()).display(), "A\\x01\\x5C");
    assert_eq!(num("-1.50").canonical_key(), "-1.5");
}

// Generators shared by the property tests.

#[derive(Debug, Clone)]
struct NumSpec {
    category: Category,
    digits: u8,
    scale: u8,
    signed: bool,
}

impl NumSpec {
    fn field(&self) -> FieldSpec {
        FieldSpec::numeric(self.category, self.digits, self.scale, self.signed)
    }
}

fn num_spec() -> impl Strategy<Value = NumSpec> {
    (
        prop_oneof![Just(Category::ZonedNumeric), Just(Category::PackedNumeric), Just(Category::BinaryNumeric)],
        1u8..=18,
        any::<bool>(),
    )
        .prop_flat_map(|(category, digits, signed)| {
            (0..=digits).prop_map(move |scale| NumSpec { category, digits, scale, signed })
        })
}

fn in_range(s: &NumSpec) -> impl Strategy<Value = Decimal> {
    let max = 10i128.pow(s.digits as u32) - 1;
    let min = if s.signed { -max } else { 0 };
    let scale = s.scale;
    (min..=max).prop_map(move |c| Decimal::new(c, scale))
}

fn encoding() -> impl Strategy<Value = Encoding> {
    prop_oneof![Just(Encoding::Ebcdic), Just(Encoding::Ascii)]
}

// Truncation oracle on decimal strings: cut fraction digits to the field's
// scale, keep the low-order `digits` digits, drop the sign when unsigned or zero.
fn truncation_oracle(value: &Decimal, spec: &NumSpec) -> Decimal {
    let text = value.to_string();
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest.to_string()),
        None => (false, text.clone()),
    };
    let (int, frac) = body.split_once('.').unwrap_or((&body, ""));
    let mut frac: String = frac.chars().take(spec.scale as usize).collect();
    while frac.len() < spec.scale as usize {
        frac.push('0');
    }
    let all = format!("{int}{frac}");
    let keep = spec.digits as usize;
    let low = if all.len() > keep { &all[all.len() - keep..] } else { &all[..] };
    let magnitude: i128 = low.parse().unwrap();
    let negative = negative && spec.signed && magnitude != 0;
    Decimal::new(if negative { -magnitude } else { magnitude }, spec.scale)
}

fn pic_fragment() -> impl Strategy<Value = String> {
    prop_oneof![
        (1u32..8).prop_map(|n| format!("X({n})")),
        (1u8..7).prop_map(|n| format!("S9({n})")),
        (1u8..7).prop_map(|n| format!("9({n})")),
        (1u8..10).prop_map(|n| format!("S9({n}) COMP-3")),
        (1u8..10).prop_map(|n| format!("9({n}) COMP")),
        (1u8..18).prop_map(|n| format!("S9({n}) BINARY")),
    ]
}

// Builds a single-layout schema from PIC fragments and fills a record with
// valid EBCDIC values derived from `seed` bytes.
fn mixed_record(pics: &[String], seed: &[u8]) -> (CopybookSchema, Vec<u8>) {
    let mut text = String::from("01 GEN.\n");
    for (i, pic) in pics.iter().enumerate() {
        text.push_str(&format!("   05 F{i} PIC {pic}.\n"));
    }
    let schema = parse_copybook(&text).unwrap();
    let mut rec = vec![0u8; schema.total_length()];
    let mut seed = seed.iter().cycle();
    for f in &schema.layouts()[0].fields {
        let bytes = if f.category == Category::Alphanumeric {
            // Any byte is a character in the single-byte code page.
            (0..f.length).map(|_| *seed.next().unwrap()).collect()
        } else {
            let max = 10i128.pow(f.digits as u32) - 1;
            let raw = seed.next().map(|&b| b as i128 * 7919 % (max + 1)).unwrap();
            let c = if f.signed && seed.next().unwrap().is_multiple_of(2) { -raw } else { raw };
            encode_field(&FieldValue::Number(Decimal::new(c, f.scale)), f, Encoding::Ebcdic, OverflowPolicy::Strict)
                .unwrap()
        };
        rec[f.offset..f.end()].copy_from_slice(&bytes);
    }
    (schema, rec)
}

proptest! {
    #[test]
    fn numeric_round_trip((s, v) in num_spec().prop_flat_map(|s| { let r = in_range(&s); (Just(s), r) }), enc in encoding()) {
        let f = s.field();
        let bytes = encode_field(&FieldValue::Number(v), &f, enc, OverflowPolicy::Strict).unwrap();
        prop_assert_eq!(decode_field(&bytes, &f, enc).unwrap(), FieldValue::Number(v));
    }

    #[test]
    fn encoded_length_is_field_length(s in num_spec(), coefficient in any::<i64>(), scale in 0u8..6, enc in encoding()) {
        let f = s.field();
        let v = FieldValue::Number(Decimal::new(coefficient as i128, scale));
        let bytes = encode_field(&v, &f, enc, OverflowPolicy::LegacyTruncate).unwrap();
        prop_assert_eq!(bytes.len(), f.length);
    }

    #[test]
    fn legacy_truncation_law(s in num_spec(), coefficient in any::<i64>(), scale in 0u8..6, enc in encoding()) {
        let f = s.field();
        let v = Decimal::new(coefficient as i128, scale);
        let bytes = encode_field(&FieldValue::Number(v), &f, enc, OverflowPolicy::LegacyTruncate).unwrap();
        let decoded = decode_field(&bytes, &f, enc).unwrap();
        prop_assert_eq!(decoded, FieldValue::Number(truncation_oracle(&v, &s)));
    }

    #[test]
    fn strict_accepts_exactly_what_truncation_preserves(s in num_spec(), coefficient in any::<i32>(), scale in 0u8..4) {
        let f = s.field();
        let v = Decimal::new(coefficient as i128, scale);
        let strict = encode_field(&FieldValue::Number(v), &f, Encoding::Ascii, OverflowPolicy::Strict);
        prop_assert_eq!(strict.is_ok(), truncation_oracle(&v, &s) == v);
    }

    #[test]
    fn text_round_trip(len in 1usize..40, text in "[ -~\u{a0}-\u{ff}]{0,40}", enc in encoding()) {
        let f = FieldSpec::text(len);
        let bytes = encode_field(&FieldValue::Text(text.clone()), &f, enc, OverflowPolicy::LegacyTruncate).unwrap();
        prop_assert_eq!(bytes.len(), len);
        let decoded = decode_field(&bytes, &f, enc).unwrap();
        let mut want: String = text.chars().take(len).collect();
        while want.chars().count() < len {
            want.push(' ');
        }
        prop_assert_eq!(decoded, FieldValue::Text(want));
    }

    #[test]
    fn code_page_is_a_bijection(b in any::<u8>()) {
        prop_assert_eq!(LATIN1_TO_EBCDIC[cp037::EBCDIC_TO_LATIN1[b as usize] as usize], b);
    }

    #[test]
    fn transcode_round_trips_and_preserves_computational_bytes(
        pics in prop::collection::vec(pic_fragment(), 1..8),
        seed in prop::collection::vec(any::<u8>(), 1..64),
    ) {
        let (schema, rec) = mixed_record(&pics, &seed);
        let ascii = transcode_record(&rec, &schema, Direction::EbcdicToAscii).unwrap();
        prop_assert_eq!(ascii.len(), rec.len());
        for f in &schema.layouts()[0].fields {
            if f.category.is_computational() {
                prop_assert_eq!(&ascii[f.offset..f.end()], &rec[f.offset..f.end()]);
            }
        }
        prop_assert_eq!(
            decode_record(&ascii, &schema, Encoding::Ascii).unwrap(),
            decode_record(&rec, &schema, Encoding::Ebcdic).unwrap()
        );
        prop_assert_eq!(transcode_record(&ascii, &schema, Direction::AsciiToEbcdic).unwrap(), rec);
    }
}

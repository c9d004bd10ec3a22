use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::ActivityLabel;

pub const NUM_PAIRS: u8 = 10;

/// Recording site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LocationCode {
    /// Open indoor space.
    CM,
    /// Confined indoor space.
    CC,
    /// Outdoor space.
    CL,
}

impl LocationCode {
    pub const ALL: [LocationCode; 3] = [LocationCode::CM, LocationCode::CC, LocationCode::CL];

    pub fn as_str(self) -> &'static str {
        match self {
            LocationCode::CM => "CM",
            LocationCode::CC => "CC",
            LocationCode::CL => "CL",
        }
    }
}

impl FromStr for LocationCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "CM" => Ok(LocationCode::CM),
            "CC" => Ok(LocationCode::CC),
            "CL" => Ok(LocationCode::CL),
            other => Err(Error::Domain(format!("unknown location code {other:?}"))),
        }
    }
}

impl fmt::Display for LocationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identity of one clip: `LLIISS_t1_t2`.
///
/// `activity_index` is 1-based (1..=12) and `pair_index` is 1..=10. Timestamps
/// are milliseconds since the sensor was connected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SampleName {
    pub location: LocationCode,
    pub activity_index: u8,
    pub pair_index: u8,
    pub t_start: u64,
    pub t_end: u64,
}

impl SampleName {
    pub fn new(location: LocationCode, activity_index: u8, pair_index: u8, t_start: u64, t_end: u64) -> Result<Self> {
        let name = SampleName {
            location,
            activity_index,
            pair_index,
            t_start,
            t_end,
        };
        name.check().map_err(|(field, message)| Error::SampleName {
            text: name.to_string(),
            field,
            message,
        })?;
        Ok(name)
    }

    fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(1..=12).contains(&self.activity_index) {
            return Err(("activity index", format!("{} not in 1..=12", self.activity_index)));
        }
        if !(1..=NUM_PAIRS).contains(&self.pair_index) {
            return Err(("pair index", format!("{} not in 1..=10", self.pair_index)));
        }
        if self.t_start >= self.t_end {
            return Err((
                "time window",
                format!("start {} is not before end {}", self.t_start, self.t_end),
            ));
        }
        Ok(())
    }

    /// The `LLIISS` group code.
    pub fn group_code(&self) -> String {
        format!("{}{:02}{:02}", self.location, self.activity_index, self.pair_index)
    }

    /// The `t1_t2` window directory name.
    pub fn window(&self) -> String {
        format!("{}_{}", self.t_start, self.t_end)
    }

    /// Activity label, `II - 1`.
    pub fn activity_label(&self) -> ActivityLabel {
        ActivityLabel::new(self.activity_index as usize - 1).expect("validated activity index")
    }
}

pub fn parse_sample_name(text: &str) -> Result<SampleName> {
    let fail = |field: &'static str, message: String| Error::SampleName {
        text: text.to_string(),
        field,
        message,
    };
    let mut parts = text.split('_');
    let (code, t1, t2) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some(c), Some(a), Some(b), None) => (c, a, b),
        _ => return Err(fail("structure", "expected LLIISS_t1_t2".into())),
    };
    let (location, activity, pair) = parse_group_code(code).map_err(|(f, m)| fail(f, m))?;
    let t_start = parse_timestamp(t1).map_err(|m| fail("start timestamp", m))?;
    let t_end = parse_timestamp(t2).map_err(|m| fail("end timestamp", m))?;
    let name = SampleName {
        location,
        activity_index: activity,
        pair_index: pair,
        t_start,
        t_end,
    };
    name.check().map_err(|(f, m)| fail(f, m))?;
    Ok(name)
}

/// Parses a six-character `LLIISS` code (the second tree layer).
pub fn parse_group_code(code: &str) -> std::result::Result<(LocationCode, u8, u8), (&'static str, String)> {
    if code.len() != 6 || !code.is_ascii() {
        return Err(("group code", format!("{code:?} is not six ASCII characters")));
    }
    let location = code[..2]
        .parse::<LocationCode>()
        .map_err(|_| ("location", format!("unknown location {:?}", &code[..2])))?;
    let activity = two_digits(&code[2..4]).ok_or(("activity index", format!("{:?} is not two digits", &code[2..4])))?;
    let pair = two_digits(&code[4..6]).ok_or(("pair index", format!("{:?} is not two digits", &code[4..6])))?;
    if !(1..=12).contains(&activity) {
        return Err(("activity index", format!("{activity} not in 1..=12")));
    }
    if !(1..=NUM_PAIRS).contains(&pair) {
        return Err(("pair index", format!("{pair} not in 1..=10")));
    }
    Ok((location, activity, pair))
}

/// Parses a `t1_t2` window directory name.
pub fn parse_window(text: &str) -> Option<(u64, u64)> {
    let (a, b) = text.split_once('_')?;
    let (a, b) = (parse_timestamp(a).ok()?, parse_timestamp(b).ok()?);
    (a < b).then_some((a, b))
}

fn two_digits(s: &str) -> Option<u8> {
    if s.len() == 2 && s.bytes().all(|b| b.is_ascii_digit()) {
        s.parse().ok()
    } else {
        None
    }
}

fn parse_timestamp(s: &str) -> std::result::Result<u64, String> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("{s:?} is not a non-negative integer"));
    }
    s.parse::<u64>().map_err(|e| format!("{s:?}: {e}"))
}

pub fn format_sample_name(name: &SampleName) -> String {
    name.to_string()
}

impl fmt::Display for SampleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{:02}{:02}_{}_{}",
            self.location, self.activity_index, self.pair_index, self.t_start, self.t_end
        )
    }
}

impl FromStr for SampleName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_sample_name(s)
    }
}

pub fn activity_label_of(name: &SampleName) -> ActivityLabel {
    name.activity_label()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field_of(err: Error) -> &'static str {
        match err {
            Error::SampleName { field, .. } => field,
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn parses_documented_example() {
        let n = parse_sample_name("CC0102_40800222_43800211").unwrap();
        assert_eq!(n.location, LocationCode::CC);
        assert_eq!((n.activity_index, n.pair_index), (1, 2));
        assert_eq!((n.t_start, n.t_end), (40800222, 43800211));
        assert_eq!(n.window(), "40800222_43800211");
    }

    #[test]
    fn rejects_bad_fields() {
        assert_eq!(field_of(parse_sample_name("CM1310_0_1").unwrap_err()), "activity index");
        assert_eq!(
            field_of(parse_sample_name("CL0307_5000_2000").unwrap_err()),
            "time window"
        );
        assert_eq!(field_of(parse_sample_name("CX0101_0_1").unwrap_err()), "location");
        assert_eq!(field_of(parse_sample_name("CM0111_0_1").unwrap_err()), "pair index");
        assert_eq!(field_of(parse_sample_name("CM0100_0_1").unwrap_err()), "pair index");
        assert_eq!(
            field_of(parse_sample_name("CM0101_a_1").unwrap_err()),
            "start timestamp"
        );
        assert_eq!(field_of(parse_sample_name("CM0101_0_-1").unwrap_err()), "end timestamp");
        assert_eq!(field_of(parse_sample_name("CM0101_0").unwrap_err()), "structure");
        assert_eq!(field_of(parse_sample_name("CM101_0_1").unwrap_err()), "group code");
    }

    #[test]
    fn formats_with_padding() {
        let n = SampleName::new(LocationCode::CM, 3, 5, 100, 3100).unwrap();
        assert_eq!(format_sample_name(&n), "CM0305_100_3100");
        let n = SampleName::new(LocationCode::CL, 12, 10, 0, 3000).unwrap();
        assert_eq!(format_sample_name(&n), "CL1210_0_3000");
    }

    #[test]
    fn label_is_index_minus_one() {
        for (ii, expected) in [(1u8, "Waving in"), (12, "Hugging"), (4, "Pointing")] {
            let n = SampleName::new(LocationCode::CC, ii, 1, 0, 1).unwrap();
            let label = activity_label_of(&n);
            assert_eq!(label.index(), ii as usize - 1);
            assert_eq!(label.name(), expected);
        }
    }

    pub(crate) fn arb_name() -> impl Strategy<Value = SampleName> {
        (0usize..3, 1u8..=12, 1u8..=10, 0u64..10_000_000_000, 1u64..100_000)
            .prop_map(|(loc, ii, ss, t, d)| SampleName::new(LocationCode::ALL[loc], ii, ss, t, t + d).unwrap())
    }

    proptest! {
        #[test]
        fn round_trip(name in arb_name()) {
            let text = format_sample_name(&name);
            let back = parse_sample_name(&text).unwrap();
            prop_assert_eq!(back, name);
            prop_assert_eq!(format_sample_name(&back), text);
        }
    }
}

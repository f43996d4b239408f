//! Identifiers and amounts shared by every stage of the pipeline.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// UTC seconds since the Unix epoch.
pub type Timestamp = i64;

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseIdError {
    #[error("missing 0x prefix")]
    MissingPrefix,
    #[error("expected {expected} hex digits, found {found}")]
    BadLength { expected: usize, found: usize },
    #[error("invalid hex digit")]
    BadHex,
}

fn parse_hex<const N: usize>(s: &str) -> Result<[u8; N], ParseIdError> {
    let s = s.trim();
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).ok_or(ParseIdError::MissingPrefix)?;
    if digits.len() != N * 2 {
        return Err(ParseIdError::BadLength { expected: N * 2, found: digits.len() });
    }
    let mut out = [0u8; N];
    hex::decode_to_slice(digits, &mut out).map_err(|_| ParseIdError::BadHex)?;
    Ok(out)
}

macro_rules! hex_id {
    ($name:ident, $len:expr) => {
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn from_bytes(bytes: [u8; $len]) -> Self {
                Self(bytes)
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }
        }

        impl FromStr for $name {
            type Err = ParseIdError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                parse_hex::<$len>(s).map(Self)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "0x{}", hex::encode(self.0))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Display::fmt(self, f)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_id!(Address, 20);
hex_id!(TxHash, 32);

impl Address {
    /// Short form used in evidence traces and logs.
    pub fn short(&self) -> String {
        let s = self.to_string();
        format!("{}…{}", &s[..8], &s[s.len() - 4..])
    }
}

/// Non-negative token amount in the token's smallest unit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenAmount(pub u128);

impl TokenAmount {
    pub const ZERO: TokenAmount = TokenAmount(0);

    /// `whole` tokens scaled by `10^decimals`.
    pub fn from_whole(whole: u128, decimals: u32) -> Self {
        TokenAmount(whole * 10u128.pow(decimals))
    }

    pub fn checked_add(self, rhs: TokenAmount) -> Option<TokenAmount> {
        self.0.checked_add(rhs.0).map(TokenAmount)
    }

    pub fn checked_sub(self, rhs: TokenAmount) -> Option<TokenAmount> {
        self.0.checked_sub(rhs.0).map(TokenAmount)
    }

    pub fn saturating_add(self, rhs: TokenAmount) -> TokenAmount {
        TokenAmount(self.0.saturating_add(rhs.0))
    }

    pub fn saturating_sub(self, rhs: TokenAmount) -> TokenAmount {
        TokenAmount(self.0.saturating_sub(rhs.0))
    }

    pub fn is_zero(&self) -> bool {
        self.0 == 0
    }

    /// Lossy conversion to display units, for ratios and plots only.
    pub fn to_display_f64(self, decimals: u32) -> f64 {
        self.0 as f64 / 10f64.powi(decimals as i32)
    }

    /// Exact decimal rendering in display units (`5200`, `0.25`).
    pub fn display_units(self, decimals: u32) -> String {
        let scale = 10u128.pow(decimals);
        let whole = self.0 / scale;
        let frac = self.0 % scale;
        if frac == 0 {
            return whole.to_string();
        }
        let frac = format!("{:0width$}", frac, width = decimals as usize);
        format!("{}.{}", whole, frac.trim_end_matches('0'))
    }
}

impl Add for TokenAmount {
    type Output = TokenAmount;
    fn add(self, rhs: TokenAmount) -> TokenAmount {
        TokenAmount(self.0 + rhs.0)
    }
}

impl AddAssign for TokenAmount {
    fn add_assign(&mut self, rhs: TokenAmount) {
        self.0 += rhs.0;
    }
}

impl Sum for TokenAmount {
    fn sum<I: Iterator<Item = TokenAmount>>(iter: I) -> TokenAmount {
        iter.fold(TokenAmount::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for TokenAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseAmountError {
    #[error("negative amount")]
    Negative,
    #[error("not an integer amount: {0:?}")]
    NotInteger(String),
    #[error("amount exceeds 128-bit range")]
    Overflow,
}

impl FromStr for TokenAmount {
    type Err = ParseAmountError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.starts_with('-') {
            return Err(ParseAmountError::Negative);
        }
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseAmountError::NotInteger(s.to_string()));
        }
        s.parse::<u128>().map(TokenAmount).map_err(|_| ParseAmountError::Overflow)
    }
}

impl Serialize for TokenAmount {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for TokenAmount {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Str(String),
            Num(u64),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::Num(n) => Ok(TokenAmount(n as u128)),
        }
    }
}

/// Parse a non-negative decimal string (`0.028`) into an integer scaled by `10^decimals`.
pub fn parse_decimal_scaled(s: &str, decimals: u32) -> Result<u128, ParseAmountError> {
    let s = s.trim();
    if s.starts_with('-') {
        return Err(ParseAmountError::Negative);
    }
    let (whole, frac) = match s.split_once('.') {
        Some((w, f)) => (w, f),
        None => (s, ""),
    };
    let digits_ok = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    if (whole.is_empty() && frac.is_empty()) || !digits_ok(whole) || !digits_ok(frac) {
        return Err(ParseAmountError::NotInteger(s.to_string()));
    }
    if frac.len() > decimals as usize {
        return Err(ParseAmountError::NotInteger(s.to_string()));
    }
    let scale = 10u128.pow(decimals);
    let whole: u128 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| ParseAmountError::Overflow)? };
    let frac_val: u128 = if frac.is_empty() {
        0
    } else {
        frac.parse::<u128>().map_err(|_| ParseAmountError::Overflow)? * 10u128.pow(decimals - frac.len() as u32)
    };
    whole.checked_mul(scale).and_then(|w| w.checked_add(frac_val)).ok_or(ParseAmountError::Overflow)
}

/// Calendar date (`YYYY-MM-DD`) to the UTC timestamp of its midnight.
pub fn date_to_timestamp(date: &str) -> Option<Timestamp> {
    let d = chrono::NaiveDate::parse_from_str(date.trim(), "%Y-%m-%d").ok()?;
    Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp())
}

pub fn timestamp_to_date(ts: Timestamp) -> String {
    chrono::DateTime::from_timestamp(ts, 0).map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_else(|| ts.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn address_normalizes_to_lowercase() {
        let a: Address = "0xA1b2C3d4E5f60718293a4B5c6D7e8F9012345678".parse().unwrap();
        assert_eq!(a.to_string(), "0xa1b2c3d4e5f60718293a4b5c6d7e8f9012345678");
        let b: Address = "0xa1b2c3d4e5f60718293a4b5c6d7e8f9012345678".parse().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn address_rejects_bad_input() {
        assert_eq!("a1b2".parse::<Address>().unwrap_err(), ParseIdError::MissingPrefix);
        assert!(matches!("0x1234".parse::<Address>().unwrap_err(), ParseIdError::BadLength { .. }));
        assert_eq!("0xz1b2c3d4e5f60718293a4b5c6d7e8f9012345678".parse::<Address>().unwrap_err(), ParseIdError::BadHex);
    }

    #[test]
    fn amount_parsing() {
        let v: TokenAmount = "5200000000000000000000".parse().unwrap();
        assert_eq!(v, TokenAmount::from_whole(5200, 18));
        assert_eq!("-5".parse::<TokenAmount>(), Err(ParseAmountError::Negative));
        assert!("1.5".parse::<TokenAmount>().is_err());
        assert_eq!(
            "999999999999999999999999999999999999999999".parse::<TokenAmount>(),
            Err(ParseAmountError::Overflow)
        );
    }

    #[test]
    fn display_units_exact() {
        assert_eq!(TokenAmount::from_whole(5200, 18).display_units(18), "5200");
        assert_eq!(TokenAmount(250_000_000_000_000_000).display_units(18), "0.25");
        assert_eq!(TokenAmount(0).display_units(18), "0");
    }

    #[test]
    fn decimal_scaling() {
        assert_eq!(parse_decimal_scaled("0.028", 18).unwrap(), 28_000_000_000_000_000);
        assert_eq!(parse_decimal_scaled("20", 18).unwrap(), 20 * 10u128.pow(18));
        assert!(parse_decimal_scaled("-1", 18).is_err());
        assert!(parse_decimal_scaled(".", 18).is_err());
    }

    #[test]
    fn dates() {
        assert_eq!(date_to_timestamp("2021-11-15"), Some(1_636_934_400));
        assert_eq!(timestamp_to_date(1_636_934_400), "2021-11-15");
    }
}

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};

use super::ConstituentError;

/// A symbol as it appeared in the source, trimmed but otherwise untouched.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawSymbol(String);

impl RawSymbol {
    /// Trims surrounding whitespace; `None` if nothing is left.
    pub fn new(text: &str) -> Option<Self> {
        let t = text.trim();
        (!t.is_empty()).then(|| RawSymbol(t.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RawSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A provider-convention symbol: `[A-Z0-9][A-Z0-9.-]*`, usable as a file stem.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ticker(String);

impl Ticker {
    /// Accepts a symbol that already satisfies the ticker grammar.
    pub fn parse(symbol: &str) -> Result<Self, ConstituentError> {
        if is_valid_ticker(symbol) {
            Ok(Ticker(symbol.to_string()))
        } else {
            Err(ConstituentError::InvalidSymbol(symbol.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Ticker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Ticker {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl Serialize for Ticker {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

pub fn is_valid_ticker(s: &str) -> bool {
    let mut bytes = s.bytes();
    match bytes.next() {
        Some(b) if b.is_ascii_uppercase() || b.is_ascii_digit() => {}
        _ => return false,
    }
    bytes.all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'.' || b == b'-')
}

/// Maps source symbols onto the quote provider's share-class convention.
///
/// Explicit overrides win; everything else gets `.` replaced by `-`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolNormalizer {
    overrides: BTreeMap<String, String>,
}

impl SymbolNormalizer {
    /// Keys are matched after upper-casing; values must already be valid tickers.
    pub fn with_overrides<I, K, V>(overrides: I) -> Result<Self, ConstituentError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut map = BTreeMap::new();
        for (k, v) in overrides {
            let value = Ticker::parse(v.as_ref())?;
            map.insert(k.as_ref().trim().to_ascii_uppercase(), value.0);
        }
        // A chain like A -> B, B -> C would make normalization non-idempotent.
        for (k, v) in &map {
            if k != v && map.get(v).is_some_and(|next| next != v) {
                return Err(ConstituentError::OverrideChain(k.clone(), v.clone()));
            }
        }
        Ok(SymbolNormalizer { overrides: map })
    }

    /// The two share-class fixes needed for the S&P 500 listing.
    pub fn sp500() -> Self {
        Self::with_overrides([("BRK.B", "BRK-B"), ("BF.B", "BF-B")]).expect("static overrides")
    }

    pub fn overrides(&self) -> &BTreeMap<String, String> {
        &self.overrides
    }

    pub fn normalize(&self, raw: &RawSymbol) -> Result<Ticker, ConstituentError> {
        let upper = raw.as_str().trim().to_uppercase();
        if upper.is_empty() {
            return Err(ConstituentError::InvalidSymbol(raw.as_str().to_string()));
        }
        if let Some(mapped) = self.overrides.get(&upper) {
            return Ok(Ticker(mapped.clone()));
        }
        // Override targets are fixed points, even when they contain a dot.
        if self.overrides.values().any(|v| *v == upper) {
            return Ok(Ticker(upper));
        }
        let symbol = upper.replace('.', "-");
        if is_valid_ticker(&symbol) {
            Ok(Ticker(symbol))
        } else {
            Err(ConstituentError::InvalidSymbol(raw.as_str().to_string()))
        }
    }
}

pub fn normalize_symbol(raw: &RawSymbol) -> Result<Ticker, ConstituentError> {
    SymbolNormalizer::default().normalize(raw)
}

//! ASA physical-status strata: I, II-III and IV-V, split by the emergency
//! modifier.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AsaGroup {
    #[serde(rename = "ASA1_NE")]
    Asa1Ne,
    #[serde(rename = "ASA1_E")]
    Asa1E,
    #[serde(rename = "ASA2_NE")]
    Asa2Ne,
    #[serde(rename = "ASA2_E")]
    Asa2E,
    #[serde(rename = "ASA3_NE")]
    Asa3Ne,
    #[serde(rename = "ASA3_E")]
    Asa3E,
}

impl AsaGroup {
    pub const ALL: [AsaGroup; 6] = [
        AsaGroup::Asa1Ne,
        AsaGroup::Asa1E,
        AsaGroup::Asa2Ne,
        AsaGroup::Asa2E,
        AsaGroup::Asa3Ne,
        AsaGroup::Asa3E,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AsaGroup::Asa1Ne => "ASA1_NE",
            AsaGroup::Asa1E => "ASA1_E",
            AsaGroup::Asa2Ne => "ASA2_NE",
            AsaGroup::Asa2E => "ASA2_E",
            AsaGroup::Asa3Ne => "ASA3_NE",
            AsaGroup::Asa3E => "ASA3_E",
        }
    }

    /// Maps a class in 1..=5 and the emergency flag to its merged stratum.
    pub fn from_class(class: u8, emergency: bool) -> Result<Self> {
        Ok(match (class, emergency) {
            (1, false) => AsaGroup::Asa1Ne,
            (1, true) => AsaGroup::Asa1E,
            (2 | 3, false) => AsaGroup::Asa2Ne,
            (2 | 3, true) => AsaGroup::Asa2E,
            (4 | 5, false) => AsaGroup::Asa3Ne,
            (4 | 5, true) => AsaGroup::Asa3E,
            _ => return Err(Error::UnknownAsa(class.to_string())),
        })
    }
}

impl fmt::Display for AsaGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Accepts roman (`III`) or arabic (`3`) classes, optionally prefixed with
/// `ASA`. Class VI is rejected.
pub fn parse_asa_class(code: &str) -> Result<u8> {
    let c = code.trim().to_ascii_uppercase();
    let c = c.strip_prefix("ASA").unwrap_or(&c).trim();
    let class = match c {
        "I" | "1" => 1,
        "II" | "2" => 2,
        "III" | "3" => 3,
        "IV" | "4" => 4,
        "V" | "5" => 5,
        _ => return Err(Error::UnknownAsa(code.to_string())),
    };
    Ok(class)
}

pub fn parse_emergency(code: &str) -> Result<bool> {
    match code.trim().to_ascii_uppercase().as_str() {
        "1" | "TRUE" | "E" | "Y" | "YES" => Ok(true),
        "0" | "FALSE" | "NE" | "N" | "NO" => Ok(false),
        _ => Err(Error::Data(format!("emergency flag `{code}` is not boolean"))),
    }
}

/// Row indices of every stratum, in row order. Strata with no rows are
/// present with an empty list, so the map always has six entries.
pub fn stratify_asa(
    data: &Dataset,
    asa_column: &str,
    emergency_column: &str,
) -> Result<BTreeMap<AsaGroup, Vec<usize>>> {
    let asa = data.codes(asa_column)?;
    let em = data.codes(emergency_column)?;
    let mut out: BTreeMap<AsaGroup, Vec<usize>> = AsaGroup::ALL.iter().map(|&g| (g, Vec::new())).collect();
    for (i, (a, e)) in asa.iter().zip(em).enumerate() {
        let group = AsaGroup::from_class(parse_asa_class(a)?, parse_emergency(e)?)?;
        out.get_mut(&group).expect("all strata present").push(i);
    }
    Ok(out)
}

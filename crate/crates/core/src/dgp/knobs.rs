//! Simulation knobs and the 77 canonical settings.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentModel {
    Linear,
    Polynomial,
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatedShare {
    /// About 35% treated.
    Low,
    /// About 65% treated.
    High,
}

impl TreatedShare {
    pub fn target(self) -> f64 {
        match self {
            TreatedShare::Low => 0.35,
            TreatedShare::High => 0.65,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overlap {
    Full,
    Penalize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseModel {
    Linear,
    Exponential,
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    None,
    Low,
    High,
}

impl Alignment {
    /// Probability that an assignment term is copied into the response.
    pub fn copy_probability(self) -> f64 {
        match self {
            Alignment::None => 0.0,
            Alignment::Low => 0.25,
            Alignment::High => 0.75,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heterogeneity {
    None,
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Knobs {
    pub treatment_model: TreatmentModel,
    pub treated_share: TreatedShare,
    pub overlap: Overlap,
    pub response_model: ResponseModel,
    pub alignment: Alignment,
    pub heterogeneity: Heterogeneity,
}

macro_rules! names {
    ($t:ty { $($v:ident => $s:literal),* $(,)? }) => {
        impl $t {
            pub fn name(self) -> &'static str {
                match self { $(Self::$v => $s),* }
            }
        }

        impl std::str::FromStr for $t {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok(Self::$v),)*
                    other => Err(Error::invalid(format!(
                        concat!("unknown ", stringify!($t), " '{}'"), other
                    ))),
                }
            }
        }
    };
}

names!(TreatmentModel { Linear => "linear", Polynomial => "polynomial", Step => "step" });
names!(TreatedShare { Low => "low", High => "high" });
names!(Overlap { Full => "full", Penalize => "penalize" });
names!(ResponseModel { Linear => "linear", Exponential => "exponential", Step => "step" });
names!(Alignment { None => "none", Low => "low", High => "high" });
names!(Heterogeneity { None => "none", Low => "low", High => "high" });

impl fmt::Display for Knobs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {}",
            self.treatment_model.name(),
            self.treated_share.name(),
            self.overlap.name(),
            self.response_model.name(),
            self.alignment.name(),
            self.heterogeneity.name()
        )
    }
}

impl std::str::FromStr for Knobs {
    type Err = Error;

    /// Parses the six knob names separated by whitespace or '/', in the
    /// order treatment model, treated share, overlap, response model,
    /// alignment, heterogeneity.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s
            .split(|c: char| c.is_whitespace() || c == '/' || c == ',')
            .filter(|p| !p.is_empty())
            .collect();
        if parts.len() != 6 {
            return Err(Error::invalid(format!(
                "expected 6 knob values, found {} in '{s}'",
                parts.len()
            )));
        }
        Ok(Knobs {
            treatment_model: parts[0].parse()?,
            treated_share: parts[1].parse()?,
            overlap: parts[2].parse()?,
            response_model: parts[3].parse()?,
            alignment: parts[4].parse()?,
            heterogeneity: parts[5].parse()?,
        })
    }
}

impl Knobs {
    /// Canonical setting `index` in 1..=77.
    pub fn setting(index: usize) -> Result<Knobs> {
        if !(1..=SETTINGS.len()).contains(&index) {
            return Err(Error::SettingOutOfRange(index));
        }
        Ok(SETTINGS[index - 1])
    }

    /// Knob levels as the integer codes used in metric tables
    /// (linear 0 / nonlinear 1 / step 2, and so on).
    pub fn codes(&self) -> [f64; 6] {
        let tm = match self.treatment_model {
            TreatmentModel::Linear => 0.0,
            TreatmentModel::Polynomial => 1.0,
            TreatmentModel::Step => 2.0,
        };
        let share = match self.treated_share {
            TreatedShare::Low => 0.0,
            TreatedShare::High => 1.0,
        };
        let overlap = match self.overlap {
            Overlap::Penalize => 0.0,
            Overlap::Full => 1.0,
        };
        let rm = match self.response_model {
            ResponseModel::Linear => 0.0,
            ResponseModel::Exponential => 1.0,
            ResponseModel::Step => 2.0,
        };
        let al = match self.alignment {
            Alignment::None => 0.0,
            Alignment::Low => 1.0,
            Alignment::High => 2.0,
        };
        let het = match self.heterogeneity {
            Heterogeneity::None => 0.0,
            Heterogeneity::Low => 1.0,
            Heterogeneity::High => 2.0,
        };
        [tm, share, overlap, rm, al, het]
    }
}

use Alignment::{High as AHigh, Low as ALow, None as ANone};
use Heterogeneity::{High as HHigh, Low as HLow, None as HNone};
use Overlap::{Full, Penalize as Pen};
use ResponseModel::{Exponential as RExp, Linear as RLin, Step as RStep};
use TreatedShare::{High, Low};
use TreatmentModel::{Linear as Lin, Polynomial as Poly, Step};

const fn k(
    treatment_model: TreatmentModel,
    treated_share: TreatedShare,
    overlap: Overlap,
    response_model: ResponseModel,
    alignment: Alignment,
    heterogeneity: Heterogeneity,
) -> Knobs {
    Knobs {
        treatment_model,
        treated_share,
        overlap,
        response_model,
        alignment,
        heterogeneity,
    }
}

/// The 77 canonical settings, indexed from 1.
pub const SETTINGS: [Knobs; 77] = [
    k(Lin, Low, Pen, RLin, AHigh, HHigh), // 1
    k(Poly, Low, Pen, RExp, AHigh, HNone), // 2
    k(Lin, Low, Pen, RLin, AHigh, HNone), // 3
    k(Poly, Low, Full, RExp, AHigh, HHigh), // 4
    k(Lin, Low, Pen, RExp, AHigh, HHigh), // 5
    k(Poly, Low, Pen, RLin, AHigh, HHigh), // 6
    k(Poly, Low, Pen, RExp, AHigh, HHigh), // 7
    k(Poly, Low, Pen, RExp, ANone, HHigh), // 8
    k(Step, Low, Pen, RStep, AHigh, HHigh), // 9
    k(Lin, Low, Pen, RExp, ALow, HHigh), // 10
    k(Poly, Low, Pen, RLin, ALow, HHigh), // 11
    k(Poly, Low, Pen, RExp, ALow, HHigh), // 12
    k(Lin, High, Pen, RExp, AHigh, HHigh), // 13
    k(Poly, High, Pen, RLin, AHigh, HHigh), // 14
    k(Poly, High, Pen, RExp, AHigh, HHigh), // 15
    k(Poly, High, Pen, RExp, ANone, HHigh), // 16
    k(Step, High, Pen, RStep, AHigh, HHigh), // 17
    k(Lin, High, Pen, RExp, ALow, HHigh), // 18
    k(Poly, High, Pen, RLin, ALow, HHigh), // 19
    k(Poly, High, Pen, RExp, ALow, HHigh), // 20
    k(Poly, Low, Pen, RStep, ALow, HLow), // 21
    k(Poly, Low, Pen, RStep, ALow, HHigh), // 22
    k(Poly, Low, Pen, RStep, AHigh, HLow), // 23
    k(Poly, Low, Pen, RStep, AHigh, HHigh), // 24
    k(Poly, Low, Pen, RExp, ALow, HLow), // 25
    k(Poly, Low, Pen, RExp, AHigh, HLow), // 26
    k(Poly, Low, Full, RStep, ALow, HLow), // 27
    k(Poly, Low, Full, RStep, ALow, HHigh), // 28
    k(Poly, Low, Full, RStep, AHigh, HLow), // 29
    k(Poly, Low, Full, RStep, AHigh, HHigh), // 30
    k(Poly, Low, Full, RExp, ALow, HLow), // 31
    k(Poly, Low, Full, RExp, ALow, HHigh), // 32
    k(Poly, Low, Full, RExp, AHigh, HLow), // 33
    k(Poly, High, Pen, RStep, ALow, HLow), // 34
    k(Poly, High, Pen, RStep, ALow, HHigh), // 35
    k(Poly, High, Pen, RStep, AHigh, HLow), // 36
    k(Poly, High, Pen, RStep, AHigh, HHigh), // 37
    k(Poly, High, Pen, RExp, ALow, HLow), // 38
    k(Poly, High, Pen, RExp, AHigh, HLow), // 39
    k(Poly, High, Full, RStep, ALow, HLow), // 40
    k(Poly, High, Full, RStep, ALow, HHigh), // 41
    k(Poly, High, Full, RStep, AHigh, HLow), // 42
    k(Poly, High, Full, RStep, AHigh, HHigh), // 43
    k(Poly, High, Full, RExp, ALow, HLow), // 44
    k(Poly, High, Full, RExp, ALow, HHigh), // 45
    k(Poly, High, Full, RExp, AHigh, HLow), // 46
    k(Poly, High, Full, RExp, AHigh, HHigh), // 47
    k(Step, Low, Pen, RStep, ALow, HLow), // 48
    k(Step, Low, Pen, RStep, ALow, HHigh), // 49
    k(Step, Low, Pen, RStep, AHigh, HLow), // 50
    k(Step, Low, Pen, RExp, ALow, HLow), // 51
    k(Step, Low, Pen, RExp, ALow, HHigh), // 52
    k(Step, Low, Pen, RExp, AHigh, HLow), // 53
    k(Step, Low, Pen, RExp, AHigh, HHigh), // 54
    k(Step, Low, Full, RStep, ALow, HLow), // 55
    k(Step, Low, Full, RStep, ALow, HHigh), // 56
    k(Step, Low, Full, RStep, AHigh, HLow), // 57
    k(Step, Low, Full, RStep, AHigh, HHigh), // 58
    k(Step, Low, Full, RExp, ALow, HLow), // 59
    k(Step, Low, Full, RExp, ALow, HHigh), // 60
    k(Step, Low, Full, RExp, AHigh, HLow), // 61
    k(Step, Low, Full, RExp, AHigh, HHigh), // 62
    k(Step, High, Pen, RStep, ALow, HLow), // 63
    k(Step, High, Pen, RStep, ALow, HHigh), // 64
    k(Step, High, Pen, RStep, AHigh, HLow), // 65
    k(Step, High, Pen, RExp, ALow, HLow), // 66
    k(Step, High, Pen, RExp, ALow, HHigh), // 67
    k(Step, High, Pen, RExp, AHigh, HLow), // 68
    k(Step, High, Pen, RExp, AHigh, HHigh), // 69
    k(Step, High, Full, RStep, ALow, HLow), // 70
    k(Step, High, Full, RStep, ALow, HHigh), // 71
    k(Step, High, Full, RStep, AHigh, HLow), // 72
    k(Step, High, Full, RStep, AHigh, HHigh), // 73
    k(Step, High, Full, RExp, ALow, HLow), // 74
    k(Step, High, Full, RExp, ALow, HHigh), // 75
    k(Step, High, Full, RExp, AHigh, HLow), // 76
    k(Step, High, Full, RExp, AHigh, HHigh), // 77
];

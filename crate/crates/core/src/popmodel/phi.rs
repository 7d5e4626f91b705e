use serde::{Deserialize, Serialize};

use super::validation::{Violation, ViolationKind};
use super::PopulationError;
use crate::scalar::{compensated_sum, Scalar};

/// Observable within-arm margins `φ_{amy}`: arm (v/p/i), antibody response
/// (a = detectable, n = not), outcome (f = failure, s = success).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiTable<T> {
    vaf: T,
    vas: T,
    vnf: T,
    vns: T,
    pnf: T,
    pns: T,
    #[serde(default)]
    paf: T,
    #[serde(default)]
    pas: T,
    /// Passive-immunization arm `(φ_if, φ_is)`, when that arm exists.
    #[serde(default, rename = "immunization", skip_serializing_if = "Option::is_none")]
    imm: Option<(T, T)>,
}

impl<T: Scalar> PhiTable<T> {
    /// Two-arm table with an undetectable placebo mediator.
    pub fn new(vaf: T, vas: T, vnf: T, vns: T, pnf: T, pns: T) -> Result<Self, PopulationError> {
        Self::from_parts_unchecked(vaf, vas, vnf, vns, pnf, pns, None).validated()
    }

    pub fn with_placebo_detectable(mut self, paf: T, pas: T) -> Result<Self, PopulationError> {
        self.paf = paf;
        self.pas = pas;
        self.validated()
    }

    pub fn with_immunization(mut self, fail: T, success: T) -> Result<Self, PopulationError> {
        self.imm = Some((fail, success));
        self.validated()
    }

    pub(crate) fn from_parts_unchecked(
        vaf: T,
        vas: T,
        vnf: T,
        vns: T,
        pnf: T,
        pns: T,
        imm: Option<(T, T)>,
    ) -> Self {
        Self {
            vaf,
            vas,
            vnf,
            vns,
            pnf,
            pns,
            paf: T::zero(),
            pas: T::zero(),
            imm,
        }
    }

    pub fn validated(self) -> Result<Self, PopulationError> {
        let v = self.check();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(PopulationError::Invalid(v))
        }
    }

    pub fn check(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut entries = vec![
            ("vaf", self.vaf),
            ("vas", self.vas),
            ("vnf", self.vnf),
            ("vns", self.vns),
            ("pnf", self.pnf),
            ("pns", self.pns),
            ("paf", self.paf),
            ("pas", self.pas),
        ];
        if let Some((f, s)) = self.imm {
            entries.push(("if", f));
            entries.push(("is", s));
        }
        for (k, p) in &entries {
            if !p.is_finite() || *p < T::zero() || *p > T::one() {
                out.push(Violation::new(
                    ViolationKind::Margin,
                    Some(format!("phi_{k}")),
                    p.as_f64(),
                    format!("margin {p} outside [0, 1]"),
                ));
            }
        }
        let mut arm_sum = |name: &str, parts: &[T]| {
            let s = compensated_sum(parts.iter().copied());
            if (s - T::one()).abs().as_f64() > T::MASS_TOLERANCE {
                out.push(Violation::new(
                    ViolationKind::MassNotOne,
                    Some(name.to_string()),
                    s.as_f64(),
                    format!("{name} arm margins sum to {s}, not 1"),
                ));
            }
        };
        arm_sum("vaccine", &[self.vaf, self.vas, self.vnf, self.vns]);
        arm_sum("placebo", &[self.pnf, self.pns, self.paf, self.pas]);
        if let Some((f, s)) = self.imm {
            arm_sum("immunization", &[f, s]);
        }
        out
    }

    pub fn vaf(&self) -> T {
        self.vaf
    }
    pub fn vas(&self) -> T {
        self.vas
    }
    pub fn vnf(&self) -> T {
        self.vnf
    }
    pub fn vns(&self) -> T {
        self.vns
    }
    pub fn pnf(&self) -> T {
        self.pnf
    }
    pub fn pns(&self) -> T {
        self.pns
    }
    pub fn paf(&self) -> T {
        self.paf
    }
    pub fn pas(&self) -> T {
        self.pas
    }
    pub fn immunization(&self) -> Option<(T, T)> {
        self.imm
    }

    /// `Pr[M1 = 0]`.
    pub fn vn(&self) -> T {
        self.vnf + self.vns
    }
    /// `Pr[M1 = 1]`.
    pub fn va(&self) -> T {
        self.vaf + self.vas
    }
    /// `E[Y_{1 M1}]`.
    pub fn vf(&self) -> T {
        self.vnf + self.vaf
    }
    pub fn vs(&self) -> T {
        self.vns + self.vas
    }
}

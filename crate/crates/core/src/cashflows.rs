//! Contract cash flows: the funding/collateral/hedging stream `A`, the
//! closeout payment `θ` and its intensity-weighted form `θ̃`.

use serde::Serialize;

use crate::funcs::{HedgeFn, TimeFn};
use crate::paths::MarketModel;

/// Which loss terms apply when both names default at the same instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimultaneousRule {
    /// Both the counterparty and the investor loss terms apply.
    #[default]
    Both,
    /// Settle as a counterparty default only.
    CounterpartyFirst,
}

impl std::str::FromStr for SimultaneousRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "both" => Ok(SimultaneousRule::Both),
            "counterparty_first" => Ok(SimultaneousRule::CounterpartyFirst),
            _ => Err(format!(
                "simultaneous_rule must be `both` or `counterparty_first`, got `{s}`"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractTerms {
    /// Collateral remuneration rate.
    pub c: TimeFn,
    /// Funding rate.
    pub f: TimeFn,
    /// Hedging rate.
    pub h: TimeFn,
    pub lgd_i: f64,
    pub lgd_c: f64,
    /// Collateral fraction `α_t`, so that `C_t = α_t V_t`.
    pub alpha_coll: TimeFn,
    /// Whether the investor's own default is priced.
    pub bilateral: bool,
    pub maturity: f64,
    pub hedge: HedgeFn,
    pub simultaneous_rule: SimultaneousRule,
}

impl ContractTerms {
    /// Terms under which every spread and loss vanishes for rate `r`.
    pub fn riskless(r: f64, maturity: f64) -> Self {
        ContractTerms {
            c: TimeFn::Constant(r),
            f: TimeFn::Constant(r),
            h: TimeFn::Constant(r),
            lgd_i: 0.0,
            lgd_c: 0.0,
            alpha_coll: TimeFn::Constant(0.0),
            bilateral: false,
            maturity,
            hedge: HedgeFn::Zero,
            simultaneous_rule: SimultaneousRule::Both,
        }
    }

    pub fn b(&self) -> f64 {
        if self.bilateral {
            1.0
        } else {
            0.0
        }
    }
}

/// Everything the drivers need at one `(t, x)` on one path.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateSnapshot {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub z: f64,
    /// First-to-default survival `G(t)`.
    pub g: f64,
    pub lam1: f64,
    pub lam2: f64,
    /// Intensity entering `θ̃` and the discounting.
    pub lam: f64,
    /// `exp(∫₀ᵗ (r + λ) du)`
    pub growth: f64,
    pub k: f64,
}

/// Who defaulted first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefaultKind {
    Counterparty,
    Investor,
    Simultaneous,
}

/// `max(x, 0)`
pub fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// `max(-x, 0)`, so `x = pos(x) - neg(x)`.
pub fn neg(x: f64) -> f64 {
    (-x).max(0.0)
}

/// `π + (f - c) C + (r - f) V + (r - h) H` with `C = α V`.
pub fn funding_a(terms: &ContractTerms, market: &MarketModel, snap: &StateSnapshot) -> f64 {
    let t = snap.t;
    let r = market.r.eval(t);
    let f = terms.f.eval(t);
    let c = terms.c.eval(t);
    let h = terms.h.eval(t);
    let alpha = terms.alpha_coll.eval(t);
    let hedge = terms.hedge.eval(t, snap.x, snap.v, snap.z);
    market.pi.eval(t, snap.x) + (f - c) * alpha * snap.v + (r - f) * snap.v + (r - h) * hedge
}

/// Closeout payment at default with closeout value `ε = V`.
pub fn closeout_theta(terms: &ContractTerms, snap: &StateSnapshot, which: DefaultKind) -> f64 {
    let exposure = (1.0 - terms.alpha_coll.eval(snap.t)) * snap.v;
    let (cp, inv) = match (which, terms.simultaneous_rule) {
        (DefaultKind::Counterparty, _) => (1.0, 0.0),
        (DefaultKind::Investor, _) => (0.0, 1.0),
        (DefaultKind::Simultaneous, SimultaneousRule::Both) => (1.0, 1.0),
        (DefaultKind::Simultaneous, SimultaneousRule::CounterpartyFirst) => (1.0, 0.0),
    };
    snap.v - cp * terms.lgd_c * pos(exposure) + terms.b() * inv * terms.lgd_i * neg(exposure)
}

/// `θ̃ = G (λ V - λ¹ LGD_C ((1-α)V)⁺ + b λ² LGD_I ((1-α)V)⁻)`
pub fn theta_tilde(terms: &ContractTerms, snap: &StateSnapshot) -> f64 {
    let exposure = (1.0 - terms.alpha_coll.eval(snap.t)) * snap.v;
    snap.g
        * (snap.lam * snap.v - snap.lam1 * terms.lgd_c * pos(exposure)
            + terms.b() * snap.lam2 * terms.lgd_i * neg(exposure))
}

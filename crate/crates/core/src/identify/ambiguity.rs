//! Cells that share eSOH and resistance but not film composition, cycled
//! to end of life side by side.

use serde::{Deserialize, Serialize};

use super::{invert_without_expansion, measure, parallel_map, FamilySegment, FilmState, InversionOptions, MeasurementVector};
use crate::degradation::DeepSOH;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::protocol::{run_campaign, Campaign, CycleRecord, RptReport, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityConfig {
    pub members: usize,
    /// Shared loss of lithium inventory, fraction.
    pub lli: f64,
    /// Shared loss of active material, fractions of nominal capacity.
    pub lam_pos: f64,
    pub lam_neg: f64,
    /// Shared cell-level film resistance, Ω.
    pub film_resistance: f64,
    pub campaign: Campaign,
    pub options: InversionOptions,
    /// Worker threads for the member campaigns.
    pub jobs: usize,
}

impl AmbiguityConfig {
    pub fn demo() -> Self {
        Self {
            members: 3,
            lli: 0.2,
            lam_pos: 0.02,
            lam_neg: 0.03,
            film_resistance: 0.01,
            campaign: Campaign::second_life(),
            options: InversionOptions::default(),
            jobs: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberReport {
    pub film: FilmState,
    pub initial: DeepSOH,
    pub measurement: MeasurementVector,
    pub initial_rpt: RptReport,
    pub rul_cycles: usize,
    pub reached_eol: bool,
    pub cycles: Vec<CycleRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityChecks {
    /// Largest pairwise gap between the initial C/20 discharge curves, V.
    pub max_curve_gap: f64,
    /// `(max − min)/mean` of the initial pulse resistances.
    pub resistance_spread: f64,
    /// Smallest pairwise difference of initial expansion, m.
    pub min_expansion_gap: f64,
    /// Smallest pairwise RUL difference over the largest RUL.
    pub min_rul_gap: f64,
    pub curves_match: bool,
    pub resistances_match: bool,
    pub expansions_distinct: bool,
    pub ruls_diverge: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityReport {
    pub measurement: MeasurementVector,
    pub family: FamilySegment,
    pub members: Vec<MemberReport>,
    pub checks: AmbiguityChecks,
}

impl AmbiguityReport {
    pub fn trajectories(&self) -> impl Iterator<Item = (&FilmState, Trajectory)> {
        self.members.iter().map(|m| {
            (
                &m.film,
                Trajectory {
                    samples: Vec::new(),
                    cycles: m.cycles.clone(),
                },
            )
        })
    }
}

/// Places `members` cells evenly on the film family of one shared
/// measurement vector and runs each through the campaign.
pub fn ambiguity_experiment(model: &Model, config: &AmbiguityConfig) -> Result<AmbiguityReport> {
    if config.members == 0 {
        return Err(Error::InvalidParameter("ambiguity experiment needs at least one member".into()));
    }
    for (name, v) in [("lam_pos", config.lam_pos), ("lam_neg", config.lam_neg)] {
        if !(0.0..1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1), got {v}")));
        }
    }
    if !(config.film_resistance >= 0.0 && config.film_resistance.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "film_resistance must be non-negative, got {}",
            config.film_resistance
        )));
    }
    config.campaign.validate()?;
    let pristine = model.pristine();
    let base = DeepSOH {
        delta_sei: 0.0,
        delta_pl: 0.0,
        capacity_pos: pristine.capacity_pos * (1.0 - config.lam_pos),
        capacity_neg: pristine.capacity_neg * (1.0 - config.lam_neg),
        lli: config.lli,
    };
    base.validate()?;
    let mut y = measure(model, &base)?;
    y.resistance += config.film_resistance;
    y.expansion = None;
    let family = match invert_without_expansion(model, &y, &config.options)? {
        super::IdentificationResult::Family { segment, .. } => segment,
        super::IdentificationResult::Infeasible { reason } => {
            return Err(Error::InvalidParameter(format!("ambiguity configuration is infeasible: {reason}")))
        }
        super::IdentificationResult::Unique { .. } => unreachable!("inversion without expansion never returns Unique"),
    };

    let films = family.samples(config.members);
    let runs = parallel_map(&films, config.jobs, |film| -> Result<MemberReport> {
        let initial = film.apply(&base);
        let measurement = measure(model, &initial)?;
        let result = run_campaign(model, model.cell_at(initial, 1.0)?, &config.campaign)?;
        Ok(MemberReport {
            film: *film,
            initial,
            measurement,
            initial_rpt: result.initial_rpt,
            rul_cycles: result.rul_cycles,
            reached_eol: result.reached_eol,
            cycles: result.trajectory.cycles,
        })
    });
    let members = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let checks = check_members(&members);
    Ok(AmbiguityReport {
        measurement: y,
        family,
        members,
        checks,
    })
}

fn check_members(members: &[MemberReport]) -> AmbiguityChecks {
    let mut max_curve_gap: f64 = 0.0;
    let mut min_expansion_gap = f64::INFINITY;
    let mut min_rul_gap = f64::INFINITY;
    let max_rul = members.iter().map(|m| m.rul_cycles).max().unwrap_or(0) as f64;
    for (i, a) in members.iter().enumerate() {
        for b in &members[i + 1..] {
            max_curve_gap = max_curve_gap.max(a.initial_rpt.discharge.max_gap(&b.initial_rpt.discharge));
            min_expansion_gap = min_expansion_gap.min((a.initial_rpt.expansion - b.initial_rpt.expansion).abs());
            let gap = (a.rul_cycles as f64 - b.rul_cycles as f64).abs();
            min_rul_gap = min_rul_gap.min(if max_rul > 0.0 { gap / max_rul } else { 0.0 });
        }
    }
    let r: Vec<f64> = members.iter().map(|m| m.initial_rpt.resistance).collect();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let spread = (r.iter().copied().fold(f64::MIN, f64::max) - r.iter().copied().fold(f64::MAX, f64::min)) / mean;
    let pairs = members.len() > 1;
    AmbiguityChecks {
        max_curve_gap,
        resistance_spread: spread,
        min_expansion_gap: if pairs { min_expansion_gap } else { 0.0 },
        min_rul_gap: if pairs { min_rul_gap } else { 0.0 },
        curves_match: max_curve_gap < 5e-3,
        resistances_match: spread < 5e-3,
        expansions_distinct: !pairs || min_expansion_gap > 0.0,
        ruls_diverge: !pairs || min_rul_gap > 0.1,
    }
}

//! Inversion of measurement vectors into degradation states, remaining
//! useful life prediction, and the ambiguity experiment.

mod ambiguity;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use ambiguity::{ambiguity_experiment, AmbiguityChecks, AmbiguityConfig, AmbiguityReport, MemberReport};

use crate::degradation::DeepSOH;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::protocol::{run_campaign, Campaign};

/// Observable quantities: electrode capacities and LLI (from the eSOH),
/// instantaneous resistance and, optionally, irreversible expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementVector {
    pub capacity_pos: f64,
    pub capacity_neg: f64,
    pub lli: f64,
    /// Cell-level instantaneous resistance at mid-SOC, Ω.
    pub resistance: f64,
    /// Irreversible expansion, m.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion: Option<f64>,
}

impl MeasurementVector {
    pub fn validate(&self) -> Result<()> {
        let ok = self.capacity_pos > 0.0
            && self.capacity_neg > 0.0
            && (0.0..1.0).contains(&self.lli)
            && self.resistance > 0.0
            && self.resistance.is_finite()
            && self.expansion.is_none_or(|e| e >= 0.0 && e.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid measurement vector {self:?}")))
        }
    }

    pub fn without_expansion(mut self) -> Self {
        self.expansion = None;
        self
    }

    fn base_state(&self) -> DeepSOH {
        DeepSOH {
            delta_sei: 0.0,
            delta_pl: 0.0,
            capacity_pos: self.capacity_pos,
            capacity_neg: self.capacity_neg,
            lli: self.lli,
        }
    }
}

/// Film thicknesses `(δ_SEI, δ_pl)`, m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilmState {
    pub delta_sei: f64,
    pub delta_pl: f64,
}

impl fmt::Display for FilmState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(δ_SEI = {:.6e} m, δ_pl = {:.6e} m)", self.delta_sei, self.delta_pl)
    }
}

impl FilmState {
    /// Point at fraction `t` along the segment from `self` to `other`.
    pub fn lerp(&self, other: &FilmState, t: f64) -> FilmState {
        FilmState {
            delta_sei: self.delta_sei + t * (other.delta_sei - self.delta_sei),
            delta_pl: self.delta_pl + t * (other.delta_pl - self.delta_pl),
        }
    }

    pub fn apply(&self, base: &DeepSOH) -> DeepSOH {
        DeepSOH {
            delta_sei: self.delta_sei,
            delta_pl: self.delta_pl,
            ..*base
        }
    }
}

/// Iso-resistance segment of film states consistent with a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilySegment {
    /// Highest-SEI end.
    pub start: FilmState,
    /// Highest-plating end.
    pub end: FilmState,
    /// Area-specific film resistance shared by the family, Ω·m².
    pub film_resistance_area: f64,
    /// Kinetic (film-independent) resistance `h4`, Ω.
    pub kinetic_resistance: f64,
    /// Whether the lithium budget shortened the segment.
    pub clipped: bool,
}

impl FamilySegment {
    pub fn point(&self, t: f64) -> FilmState {
        self.start.lerp(&self.end, t)
    }

    /// `n` states equally spaced from `start` to `end` (the midpoint when
    /// `n == 1`).
    pub fn samples(&self, n: usize) -> Vec<FilmState> {
        match n {
            0 => Vec::new(),
            1 => vec![self.point(0.5)],
            _ => (0..n).map(|i| self.point(i as f64 / (n - 1) as f64)).collect(),
        }
    }
}

/// Largest relative mismatch between two measurement vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub resistance: f64,
    pub expansion: f64,
    pub capacity: f64,
    pub lli: f64,
}

impl Residual {
    pub fn between(a: &MeasurementVector, b: &MeasurementVector) -> Self {
        let rel = |x: f64, y: f64| if x == y { 0.0 } else { (x - y).abs() / x.abs().max(y.abs()) };
        Self {
            resistance: rel(a.resistance, b.resistance),
            expansion: match (a.expansion, b.expansion) {
                (Some(x), Some(y)) => rel(x, y),
                _ => 0.0,
            },
            capacity: rel(a.capacity_pos, b.capacity_pos).max(rel(a.capacity_neg, b.capacity_neg)),
            lli: (a.lli - b.lli).abs(),
        }
    }

    pub fn max(&self) -> f64 {
        self.resistance.max(self.expansion).max(self.capacity).max(self.lli)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IdentificationResult {
    Unique { state: DeepSOH, residual: Residual },
    Family { segment: FamilySegment, residual: Residual },
    Infeasible { reason: String },
}

impl IdentificationResult {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, IdentificationResult::Infeasible { .. })
    }

    pub fn unique(&self) -> Option<&DeepSOH> {
        match self {
            IdentificationResult::Unique { state, .. } => Some(state),
            _ => None,
        }
    }

    pub fn family(&self) -> Option<&FamilySegment> {
        match self {
            IdentificationResult::Family { segment, .. } => Some(segment),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionOptions {
    /// Drop film states whose lithium exceeds `LLI·n_Li,0`.
    pub lli_budget: bool,
    /// With two admissible quadratic roots, keep the one inside the
    /// lithium budget if only one is.
    pub budget_tie_break: bool,
    /// Largest accepted relative forward-model residual.
    pub tolerance: f64,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self {
            lli_budget: true,
            budget_tie_break: false,
            tolerance: 1e-6,
        }
    }
}

/// Forward measurement model: what an ideal RPT reports for `deep`.
pub fn measure(model: &Model, deep: &DeepSOH) -> Result<MeasurementVector> {
    Ok(MeasurementVector {
        capacity_pos: deep.capacity_pos,
        capacity_neg: deep.capacity_neg,
        lli: deep.lli,
        resistance: model.instantaneous_resistance(deep, 0.0)?,
        expansion: Some(model.expansion(deep)),
    })
}

fn infeasible(reason: impl Into<String>) -> IdentificationResult {
    IdentificationResult::Infeasible { reason: reason.into() }
}

/// Kinetic resistance and cell-level film resistance implied by `y`, or the
/// reason none exists.
fn film_target(model: &Model, y: &MeasurementVector) -> Result<std::result::Result<(f64, f64), String>> {
    y.validate()?;
    let h4 = match model.kinetic_resistance(&y.base_state()) {
        Ok(h) => h,
        Err(e) if e.is_input_error() => return Ok(Err(format!("capacities and LLI admit no voltage window: {e}"))),
        Err(e) => return Err(e),
    };
    let r_film = y.resistance - h4;
    // Film resistances below rounding of R_s are zero.
    if r_film < -1e-12 * y.resistance {
        return Ok(Err(format!(
            "measured resistance {:.6e} Ω is below the kinetic resistance {h4:.6e} Ω",
            y.resistance
        )));
    }
    Ok(Ok((h4, r_film.max(0.0))))
}

/// All `(δ_SEI, δ_pl) >= 0` on `δ_SEI/κ_SEI + δ_pl/κ_pl = R_film`,
/// optionally restricted to those whose film lithium fits in `LLI·n_Li,0`.
pub fn invert_without_expansion(model: &Model, y: &MeasurementVector, opts: &InversionOptions) -> Result<IdentificationResult> {
    let (h4, r_film) = match film_target(model, y)? {
        Ok(v) => v,
        Err(reason) => return Ok(infeasible(reason)),
    };
    let d = &model.params().degradation;
    let rf = r_film * model.film_area();
    let mut segment = FamilySegment {
        start: FilmState {
            delta_sei: d.sei.conductivity * rf,
            delta_pl: 0.0,
        },
        end: FilmState {
            delta_sei: 0.0,
            delta_pl: d.plating.conductivity * rf,
        },
        film_resistance_area: rf,
        kinetic_resistance: h4,
        clipped: false,
    };
    if opts.lli_budget {
        let budget = y.lli * model.n_li_0();
        let base = y.base_state();
        let moles = |f: FilmState| model.film_lithium(&f.apply(&base));
        let (m0, m1) = (moles(segment.start), moles(segment.end));
        let slack = 1e-12 * budget.max(m0).max(m1);
        let (t_lo, t_hi) = if m0 <= budget + slack && m1 <= budget + slack {
            (0.0, 1.0)
        } else if m0 > budget + slack && m1 > budget + slack {
            return Ok(infeasible(format!(
                "film resistance needs at least {:.6e} mol of lithium but LLI allows {budget:.6e} mol",
                m0.min(m1)
            )));
        } else {
            // moles is linear along the segment
            let t = ((budget - m0) / (m1 - m0)).clamp(0.0, 1.0);
            if m0 <= budget {
                (0.0, t)
            } else {
                (t, 1.0)
            }
        };
        if t_lo > 0.0 || t_hi < 1.0 {
            let (a, b) = (segment.point(t_lo), segment.point(t_hi));
            segment.start = a;
            segment.end = b;
            segment.clipped = true;
        }
    }
    let target = y.without_expansion();
    let mut worst = Residual::between(&target, &target);
    for t in [0.0, 0.5, 1.0] {
        let mut m = measure(model, &segment.point(t).apply(&y.base_state()))?;
        m.expansion = None;
        let r = Residual::between(&target, &m);
        if r.max() > worst.max() {
            worst = r;
        }
    }
    if worst.max() > opts.tolerance {
        return Err(Error::Numerical(format!(
            "family does not reproduce the measurements (relative residual {:.3e})",
            worst.max()
        )));
    }
    Ok(IdentificationResult::Family { segment, residual: worst })
}

/// Roots of `a·z² + b·z + c = 0` without cancellation. Near-zero negative
/// discriminants are treated as a double root.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        return if b == 0.0 { Vec::new() } else { vec![-c / b] };
    }
    let disc = b * b - 4.0 * a * c;
    let scale = (b * b).max((4.0 * a * c).abs());
    if disc < 0.0 {
        return if disc > -1e-12 * scale { vec![-b / (2.0 * a)] } else { Vec::new() };
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    let (r1, r2) = (q / a, c / q);
    if r1 == r2 {
        vec![r1]
    } else {
        vec![r1, r2]
    }
}

/// Solves the resistance and expansion equations together. The family
/// equation gives `δ_SEI = κ_SEI·(R_film − δ_pl/κ_pl)`; substituted into
/// `b_SEI·δ_SEI + b_pl·δ_pl² = δ_irr − h5` it leaves a quadratic in `δ_pl`.
pub fn invert_with_expansion(model: &Model, y: &MeasurementVector, opts: &InversionOptions) -> Result<IdentificationResult> {
    let Some(expansion) = y.expansion else {
        return Err(Error::InvalidParameter("expansion measurement required".into()));
    };
    let (_, r_film) = match film_target(model, y)? {
        Ok(v) => v,
        Err(reason) => return Ok(infeasible(reason)),
    };
    let p = model.params();
    let (ks, kp) = (p.degradation.sei.conductivity, p.degradation.plating.conductivity);
    let (b_sei, b_pl) = (p.expansion.sei, p.expansion.plating);
    let rf = r_film * model.film_area();
    let film_expansion = expansion - model.lam_expansion(y.capacity_pos, y.capacity_neg);
    let dp_max = kp * rf;
    let scale_e = expansion.abs().max(1e-12);

    if b_sei == 0.0 && b_pl == 0.0 {
        return invert_without_expansion(model, y, opts);
    }
    let candidates: Vec<f64> = if rf == 0.0 {
        vec![0.0]
    } else {
        quadratic_roots(b_pl, -b_sei * ks / kp, b_sei * ks * rf - film_expansion)
    };
    let slack = 1e-9 * dp_max.max(1e-15);
    let mut roots: Vec<FilmState> = candidates
        .into_iter()
        .filter(|z| z.is_finite() && *z >= -slack && *z <= dp_max + slack)
        .map(|z| {
            let dp = z.clamp(0.0, dp_max);
            FilmState {
                delta_sei: (ks * (rf - dp / kp)).max(0.0),
                delta_pl: dp,
            }
        })
        .collect();
    roots.dedup_by(|a, b| (a.delta_pl - b.delta_pl).abs() <= slack);

    let base = y.base_state();
    let budget = y.lli * model.n_li_0();
    let within_budget = |f: &FilmState| model.film_lithium(&f.apply(&base)) <= budget * (1.0 + 1e-12);
    if opts.lli_budget && !opts.budget_tie_break {
        roots.retain(within_budget);
    }
    let film = match roots.as_slice() {
        [] => {
            return Ok(infeasible(format!(
                "no non-negative film state gives expansion {expansion:.6e} m at film resistance {rf:.6e} Ω·m²"
            )))
        }
        [one] => *one,
        [a, b, ..] => {
            let keep: Vec<_> = roots.iter().copied().filter(within_budget).collect();
            match keep.as_slice() {
                [one] if opts.budget_tie_break => *one,
                _ => return Err(Error::AmbiguousRoots(*a, *b)),
            }
        }
    };
    let state = film.apply(&base);
    let m = measure(model, &state)?;
    let residual = Residual::between(y, &m);
    let abs_expansion = (m.expansion.unwrap_or(0.0) - expansion).abs();
    if residual.resistance.max(residual.capacity).max(residual.lli) > opts.tolerance
        || abs_expansion > opts.tolerance * scale_e
    {
        return Ok(infeasible(format!(
            "closest film state {film} misses the measurements (relative residual {:.3e})",
            residual.max()
        )));
    }
    Ok(IdentificationResult::Unique { state, residual })
}

/// Remaining useful life of an identified state: cycles completed under
/// `campaign` before the capacity drops below the end-of-life threshold.
pub fn predict_rul(model: &Model, identified: &DeepSOH, campaign: &Campaign) -> Result<usize> {
    let state = model.cell_at(*identified, 1.0)?;
    Ok(run_campaign(model, state, campaign)?.rul_cycles)
}

/// Runs `f` over `items` on up to `jobs` threads, keeping input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut out: Vec<(usize, R)> = std::thread::scope(|s| {
        let workers: Vec<_> = (0..jobs)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        let Some(item) = items.get(k) else { break };
                        done.push((k, f(item)));
                    }
                    done
                })
            })
            .collect();
        workers
            .into_iter()
            .flat_map(|w| w.join().expect("worker thread panicked"))
            .collect()
    });
    out.sort_by_key(|(k, _)| *k);
    out.into_iter().map(|(_, r)| r).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn aged(model: &Model) -> DeepSOH {
        DeepSOH {
            delta_sei: 6e-8,
            delta_pl: 2e-8,
            capacity_pos: model.pristine().capacity_pos * 0.97,
            capacity_neg: model.pristine().capacity_neg * 0.96,
            lli: 0.18,
        }
    }

    #[test]
    fn quadratic_roots_stable() {
        let r = quadratic_roots(1.0, -1e8, 1.0);
        assert!(r.iter().any(|z| (z - 1e-8).abs() < 1e-20));
        assert_eq!(quadratic_roots(0.0, 2.0, -4.0), vec![2.0]);
        assert!(quadratic_roots(1.0, 0.0, 1.0).is_empty());
    }

    #[test]
    fn zero_film_is_single_point() {
        let m = Model::demo();
        let deep = DeepSOH { lli: 0.1, ..m.pristine_deep() };
        let y = measure(&m, &deep).unwrap();
        let seg = *invert_without_expansion(&m, &y, &InversionOptions::default())
            .unwrap()
            .family()
            .unwrap();
        assert_eq!(seg.start, seg.end);
        assert_eq!(seg.start.delta_sei, 0.0);
        let u = invert_with_expansion(&m, &y, &InversionOptions::default()).unwrap();
        let s = u.unique().unwrap();
        assert_eq!((s.delta_sei, s.delta_pl), (0.0, 0.0));
    }

    #[test]
    fn recovers_known_state() {
        let m = Model::demo();
        let truth = aged(&m);
        let y = measure(&m, &truth).unwrap();
        let r = invert_with_expansion(&m, &y, &InversionOptions::default()).unwrap();
        let s = r.unique().unwrap();
        assert!(((s.delta_sei - truth.delta_sei) / truth.delta_sei).abs() < 1e-6);
        assert!(((s.delta_pl - truth.delta_pl) / truth.delta_pl).abs() < 1e-6);
    }

    #[test]
    fn resistance_below_kinetic_is_infeasible() {
        let m = Model::demo();
        let mut y = measure(&m, &aged(&m)).unwrap();
        y.resistance = m.kinetic_resistance(&aged(&m)).unwrap() * 0.9;
        assert!(invert_without_expansion(&m, &y, &InversionOptions::default()).unwrap().is_infeasible());
    }

    #[test]
    fn expansion_below_lam_part_is_infeasible() {
        let m = Model::demo();
        let truth = aged(&m);
        let mut y = measure(&m, &truth).unwrap();
        y.expansion = Some(m.lam_expansion(truth.capacity_pos, truth.capacity_neg) * 0.5);
        assert!(invert_with_expansion(&m, &y, &InversionOptions::default()).unwrap().is_infeasible());
    }

    #[test]
    fn unique_solution_lies_on_family() {
        let m = Model::demo();
        let y = measure(&m, &aged(&m)).unwrap();
        let seg = *invert_without_expansion(&m, &y, &InversionOptions::default())
            .unwrap()
            .family()
            .unwrap();
        let s = *invert_with_expansion(&m, &y, &InversionOptions::default()).unwrap().unique().unwrap();
        let d = &m.params().degradation;
        let on_line = s.delta_sei / d.sei.conductivity + s.delta_pl / d.plating.conductivity;
        assert!((on_line - seg.film_resistance_area).abs() < 1e-9 * seg.film_resistance_area);
        assert!(s.delta_pl >= seg.start.delta_pl && s.delta_pl <= seg.end.delta_pl);
    }

    #[test]
    fn budget_clips_family() {
        let m = Model::demo();
        let mut truth = aged(&m);
        truth.lli = m.film_lithium(&truth) / m.n_li_0() * 1.05;
        let y = measure(&m, &truth).unwrap();
        let seg = *invert_without_expansion(&m, &y, &InversionOptions::default())
            .unwrap()
            .family()
            .unwrap();
        assert!(seg.clipped);
        let open = invert_without_expansion(
            &m,
            &y,
            &InversionOptions {
                lli_budget: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!open.family().unwrap().clipped);
    }

    #[test]
    fn parallel_map_keeps_order() {
        let v: Vec<usize> = (0..37).collect();
        assert_eq!(parallel_map(&v, 4, |x| x * 2), v.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}

//! Five-point minimal solvers and the sample-pattern dispatcher.
//!
//! All solvers take five [`ReducedMatch`]es expressed in the rig frame and
//! return pinhole poses in that same frame.

mod calibrated;
mod focal;

pub use calibrated::{translation_scale, recover_scale_calibrated, solve_sh5_2, solve_sh5_3, solve_sh5_4};
pub use focal::{recover_scale_focal, solve_sh5f_2, solve_sh5f_3};

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::elim::{specialize_with_degree, GeneratorTable, SparsePoly};
use crate::error::{Error, Result};
use crate::geometry::{prerotate, Mode, PoseSolution, Prerotation, ReducedMatch};
use crate::poly::{sturm_roots, UnivariatePoly};

const POLISH_STEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolverId {
    #[serde(rename = "sH5_2")]
    SH5_2,
    #[serde(rename = "sH5_3")]
    SH5_3,
    #[serde(rename = "sH5_4")]
    SH5_4,
    #[serde(rename = "sH5f_2")]
    SH5f2,
    #[serde(rename = "sH5f_3")]
    SH5f3,
}

impl SolverId {
    pub const ALL: [SolverId; 5] = [
        SolverId::SH5_2,
        SolverId::SH5_3,
        SolverId::SH5_4,
        SolverId::SH5f2,
        SolverId::SH5f3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverId::SH5_2 => "sH5_2",
            SolverId::SH5_3 => "sH5_3",
            SolverId::SH5_4 => "sH5_4",
            SolverId::SH5f2 => "sH5f_2",
            SolverId::SH5f3 => "sH5f_3",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name().eq_ignore_ascii_case(name))
    }

    pub fn mode(self) -> Mode {
        match self {
            SolverId::SH5f2 | SolverId::SH5f3 => Mode::Focal,
            _ => Mode::Calibrated,
        }
    }

    /// Upper bound on the number of returned poses.
    pub fn max_solutions(self) -> usize {
        match self {
            SolverId::SH5_2 | SolverId::SH5f2 => 5,
            SolverId::SH5_3 | SolverId::SH5f3 => 3,
            SolverId::SH5_4 => 2,
        }
    }

    /// A sample pattern this solver handles, used by the benchmarks.
    pub fn canonical_pattern(self) -> &'static [usize] {
        match self {
            SolverId::SH5_2 | SolverId::SH5f2 => &[2, 2, 1],
            SolverId::SH5_3 | SolverId::SH5f3 => &[3, 1, 1],
            SolverId::SH5_4 => &[4, 1],
        }
    }
}

impl std::fmt::Display for SolverId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Camera-occurrence counts of a sample, largest first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SamplePattern {
    pub multiplicities: Vec<usize>,
}

impl SamplePattern {
    pub fn of(matches: &[ReducedMatch]) -> Self {
        let mut counts: Vec<(usize, usize)> = Vec::new();
        for m in matches {
            match counts.iter_mut().find(|(c, _)| *c == m.cam_index) {
                Some((_, n)) => *n += 1,
                None => counts.push((m.cam_index, 1)),
            }
        }
        let mut multiplicities: Vec<usize> = counts.into_iter().map(|(_, n)| n).collect();
        multiplicities.sort_unstable_by(|a, b| b.cmp(a));
        Self { multiplicities }
    }

    pub fn max(&self) -> usize {
        self.multiplicities.first().copied().unwrap_or(0)
    }
}

/// Picks the solver for a five-match sample.
pub fn classify_sample(matches: &[ReducedMatch], mode: Mode) -> Result<(SamplePattern, SolverId)> {
    if matches.len() != 5 {
        return Err(Error::Unsolvable(format!("expected 5 matches, got {}", matches.len())));
    }
    let pattern = SamplePattern::of(matches);
    let solver = match (pattern.max(), mode) {
        (1 | 2, Mode::Calibrated) => SolverId::SH5_2,
        (3, Mode::Calibrated) => SolverId::SH5_3,
        (4, Mode::Calibrated) => SolverId::SH5_4,
        (1 | 2, Mode::Focal) => SolverId::SH5f2,
        (3, Mode::Focal) => SolverId::SH5f3,
        (4, Mode::Focal) => {
            return Err(Error::Unsolvable(
                "four matches in one camera leave the focal length unconstrained".into(),
            ))
        }
        _ => {
            return Err(Error::Unsolvable(
                "all matches in one camera carry no metric scale".into(),
            ))
        }
    };
    Ok((pattern, solver))
}

/// Tolerances applied to candidate solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Bound on the normalized I₁ generator residual, `None` disables the filter.
    pub residual_tol: Option<f64>,
    /// Bound on the normalized residual of the scale back-substitution generators.
    pub back_tol: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            residual_tol: Some(1e-6),
            back_tol: Some(1e-8),
        }
    }
}

impl SolverOptions {
    /// Settings for noisy data, where the over-determined calibrated
    /// solvers never land exactly on the variety.
    pub fn noisy() -> Self {
        Self {
            residual_tol: None,
            back_tol: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// Degree of the univariate polynomial that was solved (0 for sH5₄).
    pub poly_degree: usize,
    pub n_real_roots: usize,
    /// Candidates removed by the residual, scale and cheirality checks.
    pub filtered_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutput {
    pub solver: SolverId,
    pub solutions: Vec<PoseSolution>,
    pub diagnostics: Diagnostics,
}

/// Classifies the sample and runs the matching solver.
pub fn solve(matches: &[ReducedMatch], mode: Mode, opts: &SolverOptions) -> Result<SolverOutput> {
    let (_, solver) = classify_sample(matches, mode)?;
    solve_with(solver, matches, opts)
}

pub fn solve_with(solver: SolverId, matches: &[ReducedMatch], opts: &SolverOptions) -> Result<SolverOutput> {
    match solver {
        SolverId::SH5_2 => solve_sh5_2(matches, opts),
        SolverId::SH5_3 => solve_sh5_3(matches, opts),
        SolverId::SH5_4 => solve_sh5_4(matches, opts),
        SolverId::SH5f2 => solve_sh5f_2(matches, opts),
        SolverId::SH5f3 => solve_sh5f_3(matches, opts),
    }
}

/// Matches moved into the anchor camera's centred frame, anchor matches
/// first, scaled to unit mean centre distance, then pre-rotated.
pub(crate) struct Prepared {
    pub matches: Vec<ReducedMatch>,
    anchor_center: Vector3<f64>,
    scale: f64,
    prerotation: Prerotation,
}

impl Prepared {
    pub fn new(matches: &[ReducedMatch], mode: Mode, required_max: Option<usize>) -> Result<Self> {
        if matches.len() != 5 {
            return Err(Error::Unsolvable(format!("expected 5 matches, got {}", matches.len())));
        }
        let pattern = SamplePattern::of(matches);
        let max = pattern.max();
        if let Some(req) = required_max {
            let ok = if req == 2 { max <= 2 } else { max == req };
            if !ok {
                return Err(Error::Unsolvable(format!(
                    "pattern {:?} does not fit this solver",
                    pattern.multiplicities
                )));
            }
        }
        let count = |cam: usize| matches.iter().filter(|m| m.cam_index == cam).count();
        let anchor = matches
            .iter()
            .find(|m| count(m.cam_index) == max)
            .expect("non-empty sample")
            .cam_index;
        let anchor_center = matches
            .iter()
            .find(|m| m.cam_index == anchor)
            .expect("anchor present")
            .center;
        let mut ordered: Vec<ReducedMatch> = matches
            .iter()
            .filter(|m| m.cam_index == anchor)
            .chain(matches.iter().filter(|m| m.cam_index != anchor))
            .map(|m| ReducedMatch {
                center: if m.cam_index == anchor {
                    Vector3::zeros()
                } else {
                    m.center - anchor_center
                },
                ..m.clone()
            })
            .collect();
        let offsets: Vec<f64> = ordered[max..].iter().map(|m| m.center.norm()).collect();
        let mean = offsets.iter().sum::<f64>() / offsets.len().max(1) as f64;
        let scale = if mean > 0.0 && mean.is_finite() { mean } else { 1.0 };
        for m in &mut ordered {
            m.center /= scale;
        }
        let (prerotation, matches) = prerotate(&ordered, mode);
        Ok(Self {
            matches,
            anchor_center,
            scale,
            prerotation,
        })
    }

    /// Maps a pose found for the prepared matches back to the rig frame.
    pub fn restore(&self, pose: &PoseSolution) -> PoseSolution {
        let mut p = self.prerotation.restore(pose);
        p.translation = p.translation * self.scale + self.anchor_center;
        p.plane.0 /= self.scale;
        p
    }
}

/// Restricts every generator to the line `b0 + γ·dir`, keeps the one whose
/// leading coefficient is largest relative to its other coefficients and
/// returns its real roots, polished against the generator itself.
pub(crate) fn roots_along_line(
    table: &GeneratorTable,
    b0: &[f64],
    dir: &[f64],
    degree: usize,
) -> Result<(UnivariatePoly, Vec<f64>)> {
    let (poly, best) = table
        .polys
        .iter()
        .map(|p| (p, specialize_with_degree(p, b0, dir, degree)))
        .filter_map(|(p, u)| {
            let lead = u.coeffs().get(degree).copied().unwrap_or(0.0).abs();
            let scale = u.max_abs_coeff();
            (scale > 0.0).then_some((lead / scale, p, u))
        })
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, p, u)| (p, u))
        .ok_or_else(|| Error::Degenerate("every generator vanishes on the solution line".into()))?;
    if best.degree().unwrap_or(0) == 0 {
        return Err(Error::Degenerate("restricted generator is constant".into()));
    }
    let roots = sturm_roots(&best)
        .into_iter()
        .map(|g| polish_on_line(poly, &best, b0, dir, g))
        .collect();
    Ok((best, roots))
}

/// Newton steps on the generator evaluated directly on the line, with the
/// interpolated polynomial supplying the slope. The interpolation loses
/// accuracy for roots far outside its nodes.
fn polish_on_line(poly: &SparsePoly, u: &UnivariatePoly, b0: &[f64], dir: &[f64], mut g: f64) -> f64 {
    let at = |g: f64| -> f64 {
        let x: Vec<f64> = b0.iter().zip(dir).map(|(a, d)| a + g * d).collect();
        poly.evaluate(&x)
    };
    let du = u.derivative();
    let mut f = at(g);
    for _ in 0..POLISH_STEPS {
        let slope = du.eval(g);
        if f == 0.0 || slope == 0.0 || !slope.is_finite() {
            break;
        }
        let next = g - f / slope;
        let fn_ = at(next);
        if !(fn_.abs() < f.abs()) {
            break;
        }
        g = next;
        f = fn_;
    }
    g
}

/// Affine line `b0 + γ·dir` inside a two-dimensional null space on which
/// the coordinate `fixed` equals 1.
pub(crate) fn affine_line(
    basis: &[nalgebra::DVector<f64>],
    fixed: usize,
) -> Result<(nalgebra::DVector<f64>, nalgebra::DVector<f64>)> {
    let (b1, b2) = (&basis[0], &basis[1]);
    let (n1, n2) = (b1[fixed], b2[fixed]);
    let nn = n1 * n1 + n2 * n2;
    if nn < 1e-20 {
        return Err(Error::Degenerate("g33 vanishes on the whole null space".into()));
    }
    let b0 = (b1 * n1 + b2 * n2) / nn;
    let dir = (b2 * n1 - b1 * n2) / nn.sqrt();
    Ok((b0, dir))
}

/// Stacks the two independent constraint rows of each match over the
/// selected columns of the 12 unknowns `(G row-major, m)`.
pub(crate) fn stacked_rows(matches: &[ReducedMatch], columns: &[usize]) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(2 * matches.len(), columns.len());
    for (i, m) in matches.iter().enumerate() {
        let rows = crate::geometry::independent_constraint_rows(m);
        for k in 0..2 {
            for (j, &col) in columns.iter().enumerate() {
                c[(2 * i + k, j)] = rows[(k, col)];
            }
        }
    }
    c
}

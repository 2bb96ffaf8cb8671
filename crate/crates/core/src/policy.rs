//! Trigger prices: the locus `A(P(x)) + V_z = 0` separating hold and
//! exercise regions, read off solved surfaces.

use std::io::Write;

use crate::error::{Result, SwingError};
use crate::grid::nearest_index;
use crate::solver::{HjbProblem, Solution, ValueSurface};

/// How a scanned row of `h = A + V_z` behaved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowFlag {
    /// Exactly one sign change.
    Single,
    /// Several sign changes; the leftmost is reported.
    Multiple,
    /// `h > 0` on the whole row: the trigger lies below the domain.
    AlwaysExercise,
    /// `h <= 0` on the whole row: the trigger lies above the domain.
    NeverExercise,
}

impl RowFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            RowFlag::Single => "single",
            RowFlag::Multiple => "multiple",
            RowFlag::AlwaysExercise => "always",
            RowFlag::NeverExercise => "never",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerPoint {
    /// Scanned coordinate (`z` or `x2`).
    pub coord: f64,
    /// Root in the trigger coordinate, `None` when the row has no sign change.
    pub trigger: Option<f64>,
    pub flag: RowFlag,
}

/// Exercise curve at one time with one coordinate held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerCurve {
    pub time: f64,
    /// Value of the held coordinate (`NaN` for single-factor curves).
    pub fixed: f64,
    /// Points in increasing `coord`.
    pub points: Vec<TriggerPoint>,
}

impl TriggerCurve {
    /// `(coord, trigger)` of rows with a clean single crossing.
    pub fn clean_points(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.flag == RowFlag::Single)
            .filter_map(|p| p.trigger.map(|x| (p.coord, x)))
            .collect()
    }
}

/// Leftmost root of the sampled function `h` on `x`, by sign change and
/// linear interpolation.
pub fn scan_row(x: &[f64], h: &[f64]) -> (Option<f64>, RowFlag) {
    let mut first = None;
    let mut crossings = 0;
    for i in 0..h.len() - 1 {
        let (a, b) = (h[i], h[i + 1]);
        if (a > 0.0) != (b > 0.0) {
            crossings += 1;
            if first.is_none() {
                first = Some(x[i] + (x[i + 1] - x[i]) * a / (a - b));
            }
        }
    }
    let flag = match crossings {
        0 if h[0] > 0.0 => RowFlag::AlwaysExercise,
        0 => RowFlag::NeverExercise,
        1 => RowFlag::Single,
        _ => RowFlag::Multiple,
    };
    (first, flag)
}

fn slice<'a>(solution: &'a Solution, t: f64) -> Result<&'a ValueSurface> {
    let s = solution
        .surface_at(t)
        .ok_or_else(|| SwingError::InsufficientSlices("no retained surfaces".into()))?;
    let dt = solution.grid.dt();
    if (s.time - t).abs() > 0.5 * dt + 1e-12 {
        return Err(SwingError::InsufficientSlices(format!(
            "no surface retained near t = {t} (closest is {})",
            s.time
        )));
    }
    Ok(s)
}

fn row_h(problem: &HjbProblem, surface: &ValueSurface, iz: usize, i2: usize, x2: f64) -> Vec<f64> {
    let g = &problem.grid;
    g.x1.iter()
        .enumerate()
        .map(|(i1, &x1)| problem.payoff(x1, x2) + surface.marginal[g.index(iz, i2, i1)])
        .collect()
}

/// One-factor exercise curve `(z, x_trigger)` at time `t`, using the same
/// upwind `V_z` the solver used for its control. The `z = M` row is skipped.
pub fn trigger_1d(problem: &HjbProblem, solution: &Solution, t: f64) -> Result<TriggerCurve> {
    let surface = slice(solution, t)?;
    let g = &problem.grid;
    let points = (0..g.nz() - 1)
        .map(|iz| {
            let h = row_h(problem, surface, iz, 0, 0.0);
            let (trigger, flag) = scan_row(&g.x1, &h);
            TriggerPoint {
                coord: g.z[iz],
                trigger,
                flag,
            }
        })
        .collect();
    Ok(TriggerCurve {
        time: surface.time,
        fixed: f64::NAN,
        points,
    })
}

/// Planes onto which the two-factor exercise surface is projected.
#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    /// Price `x1 + x2` against `z`, one curve per listed `x2`.
    PriceZ(Vec<f64>),
    /// `x1` against `x2`, one curve per listed `z`.
    X1X2(Vec<f64>),
}

/// Two-factor exercise curves at time `t`. Held values snap to the nearest node.
///
/// For [`Projection::PriceZ`] the points are `(z, price trigger)`, for
/// [`Projection::X1X2`] they are `(x2, x1 trigger)`.
pub fn trigger_2d_projections(
    problem: &HjbProblem,
    solution: &Solution,
    t: f64,
    projection: &Projection,
) -> Result<Vec<TriggerCurve>> {
    let g = &problem.grid;
    let x2_axis = g
        .x2
        .as_ref()
        .ok_or_else(|| SwingError::DimensionMismatch("projection needs a two-factor grid".into()))?;
    let surface = slice(solution, t)?;
    let curves = match projection {
        Projection::PriceZ(x2_values) => x2_values
            .iter()
            .map(|&v| {
                let i2 = nearest_index(x2_axis, v);
                let x2 = x2_axis[i2];
                let points = (0..g.nz() - 1)
                    .map(|iz| {
                        let (trigger, flag) = scan_row(&g.x1, &row_h(problem, surface, iz, i2, x2));
                        TriggerPoint {
                            coord: g.z[iz],
                            trigger: trigger.map(|x1| x1 + x2),
                            flag,
                        }
                    })
                    .collect();
                TriggerCurve {
                    time: surface.time,
                    fixed: x2,
                    points,
                }
            })
            .collect(),
        Projection::X1X2(z_values) => z_values
            .iter()
            .map(|&v| {
                let iz = nearest_index(&g.z, v).min(g.nz() - 2);
                let points = x2_axis
                    .iter()
                    .enumerate()
                    .map(|(i2, &x2)| {
                        let (trigger, flag) = scan_row(&g.x1, &row_h(problem, surface, iz, i2, x2));
                        TriggerPoint {
                            coord: x2,
                            trigger,
                            flag,
                        }
                    })
                    .collect();
                TriggerCurve {
                    time: surface.time,
                    fixed: g.z[iz],
                    points,
                }
            })
            .collect(),
    };
    Ok(curves)
}

/// Least-squares slope of the curve drawn with the trigger on the horizontal
/// axis, i.e. `d coord / d trigger`. Only clean rows enter the fit;
/// `exclude_first` drops the first listed point beforehand.
pub fn lsq_slope(curve: &TriggerCurve, exclude_first: bool) -> Result<f64> {
    let skip = usize::from(exclude_first);
    let pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .skip(skip)
        .filter(|p| p.flag == RowFlag::Single)
        .filter_map(|p| p.trigger.map(|x| (x, p.coord)))
        .collect();
    fit_slope(&pts)
}

/// Ordinary least-squares slope of `y` on `x` over `(x, y)` pairs.
pub fn fit_slope(pts: &[(f64, f64)]) -> Result<f64> {
    if pts.len() < 2 {
        return Err(SwingError::DegenerateRegression(format!(
            "need at least 2 points, have {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(SwingError::DegenerateRegression("all abscissae are equal".into()));
    }
    Ok(sxy / sxx)
}

/// Writes curves as CSV: `t,fixed,coord,trigger,flag`. Missing triggers are empty.
pub fn write_curves_csv<W: Write>(mut w: W, curves: &[TriggerCurve]) -> std::io::Result<()> {
    writeln!(w, "t,fixed,coord,trigger,flag")?;
    for c in curves {
        for p in &c.points {
            let trig = p.trigger.map(|x| x.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{}", c.time, c.fixed, p.coord, trig, p.flag.as_str())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scan_finds_linear_root() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let h: Vec<f64> = x.iter().map(|x| x - 1.25).collect();
        let (r, f) = scan_row(&x, &h);
        assert!((r.unwrap() - 1.25).abs() < 1e-15);
        assert_eq!(f, RowFlag::Single);
    }

    #[test]
    fn constant_marginal_shifts_root() {
        // h = x - K - c with K = 30, c = 4.5
        let x: Vec<f64> = (0..50).map(|k| 20.0 + 0.5 * k as f64).collect();
        let h: Vec<f64> = x.iter().map(|x| x - 30.0 - 4.5).collect();
        assert!((scan_row(&x, &h).0.unwrap() - 34.5).abs() < 1e-12);
    }

    #[test]
    fn flags_rows_without_single_crossing() {
        let x = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(scan_row(&x, &[1.0, 2.0, 3.0, 4.0]), (None, RowFlag::AlwaysExercise));
        assert_eq!(scan_row(&x, &[-1.0, 0.0, -3.0, -4.0]), (None, RowFlag::NeverExercise));
        let (r, f) = scan_row(&x, &[-1.0, 1.0, -1.0, 1.0]);
        assert_eq!(f, RowFlag::Multiple);
        assert!((r.unwrap() - 0.5).abs() < 1e-15);
    }

    fn curve(points: &[(f64, f64)]) -> TriggerCurve {
        TriggerCurve {
            time: 0.5,
            fixed: 0.25,
            points: points
                .iter()
                .map(|&(c, x)| TriggerPoint {
                    coord: c,
                    trigger: Some(x),
                    flag: RowFlag::Single,
                })
                .collect(),
        }
    }

    #[test]
    fn slope_of_exact_line() {
        // coord = -0.35 * trigger + 20
        let pts: Vec<(f64, f64)> = (0..10)
            .map(|k| {
                let x = 30.0 + k as f64;
                (-0.35 * x + 20.0, x)
            })
            .collect();
        let s = lsq_slope(&curve(&pts), false).unwrap();
        assert!((s + 0.35).abs() < 1e-12);
    }

    #[test]
    fn exclude_first_drops_outlier() {
        let mut pts = vec![(0.0, 99.0)];
        pts.extend((1..8).map(|k| (k as f64, 50.0 - 2.0 * k as f64)));
        let s = lsq_slope(&curve(&pts), true).unwrap();
        assert!((s + 0.5).abs() < 1e-12);
        assert!((lsq_slope(&curve(&pts), false).unwrap() + 0.5).abs() > 1e-3);
    }

    #[test]
    fn degenerate_regressions() {
        assert!(lsq_slope(&curve(&[(1.0, 2.0)]), false).is_err());
        assert!(lsq_slope(&curve(&[(1.0, 2.0), (2.0, 2.0)]), false).is_err());
    }

    #[test]
    fn noisy_line_slope() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<(f64, f64)> = (0..40)
            .map(|k| {
                let x = 10.0 + 0.25 * k as f64;
                (-0.35 * x + 1e-3 * (rng.random::<f64>() - 0.5), x)
            })
            .collect();
        let s = lsq_slope(&curve(&pts), false).unwrap();
        assert!((s + 0.35).abs() < 1e-2);
    }

    proptest! {
        #[test]
        fn scan_root_brackets_sign_change(vals in proptest::collection::vec(-5.0..5.0f64, 3..40)) {
            let x: Vec<f64> = (0..vals.len()).map(|k| k as f64).collect();
            let (r, f) = scan_row(&x, &vals);
            match f {
                RowFlag::Single | RowFlag::Multiple => {
                    let r = r.unwrap();
                    let bracketed = (0..vals.len() - 1).any(|i| {
                        x[i] <= r && r <= x[i + 1] && (vals[i] > 0.0) != (vals[i + 1] > 0.0)
                    });
                    prop_assert!(bracketed);
                }
                _ => prop_assert!(r.is_none()),
            }
        }
    }
}

use ndarray::{Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::{check_stability, AttentionField, Coefficients, PdeKind, WaveState};
use crate::error::{Error, Result};
use crate::grid::{AxisMode, Domain, GradientScheme};

/// Per-step options shared by all kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSettings {
    pub axis: AxisMode,
    pub scheme: GradientScheme,
    pub guard: bool,
    pub renormalize_rows: bool,
    pub clamp_nonnegative: bool,
}

impl Default for StepSettings {
    fn default() -> Self {
        StepSettings {
            axis: AxisMode::PerRow1d,
            scheme: GradientScheme::Upwind,
            guard: true,
            renormalize_rows: false,
            clamp_nonnegative: false,
        }
    }
}

/// The bare explicit update for `kind`, before clamping/renormalization.
/// Returns the new field and, for the wave kind, the new velocity. Entries
/// outside a causal support are forced to zero.
pub(crate) fn raw_update(
    kind: PdeKind,
    dom: &Domain,
    scheme: GradientScheme,
    k: &Coefficients,
    dt: f64,
    a: &Array2<f64>,
    v: Option<&Array2<f64>>,
) -> (Array2<f64>, Option<Array2<f64>>) {
    match kind {
        PdeKind::Diffusion => {
            let mut out = dom.laplacian(a);
            out.zip_mut_with(a, |l, &x| *l = x + dt * k.alpha * *l);
            dom.mask_in_place(&mut out);
            (out, None)
        }
        PdeKind::ReactionDiffusion => {
            let mut out = dom.laplacian(a);
            out.zip_mut_with(a, |l, &x| {
                *l = x + dt * (k.alpha * *l + k.beta * x * (1.0 - x));
            });
            dom.mask_in_place(&mut out);
            (out, None)
        }
        PdeKind::AdvectionDiffusion => {
            let lap = dom.laplacian(a);
            let grad = dom.gradient(a, scheme);
            let mut out = Zip::from(a)
                .and(&lap)
                .and(&grad)
                .map_collect(|&x, &l, &g| x + dt * (k.alpha * l - k.beta * g));
            dom.mask_in_place(&mut out);
            (out, None)
        }
        PdeKind::Wave => {
            let lap = dom.laplacian(a);
            let c2 = k.c * k.c;
            let mut v_new = match v {
                Some(v) => Zip::from(v).and(&lap).map_collect(|&v, &l| v + dt * c2 * l),
                None => lap.mapv(|l| dt * c2 * l),
            };
            dom.mask_in_place(&mut v_new);
            let mut a_new = Zip::from(a).and(&v_new).map_collect(|&x, &w| x + dt * w);
            dom.mask_in_place(&mut a_new);
            (a_new, Some(v_new))
        }
    }
}

/// Clamp and/or renormalize rows as configured. Returns the processed field
/// and the per-row mass seen before renormalization.
pub(crate) fn postprocess(
    mut values: Array2<f64>,
    s: &StepSettings,
) -> Result<(Array2<f64>, Option<Vec<f64>>)> {
    if s.clamp_nonnegative {
        values.mapv_inplace(|x| x.max(0.0));
    }
    if !s.renormalize_rows {
        return Ok((values, None));
    }
    let mass = values.sum_axis(Axis(1)).to_vec();
    for (row, (mut r, &m)) in values.axis_iter_mut(Axis(0)).zip(&mass).enumerate() {
        if !(m > 0.0) {
            return Err(Error::DegenerateField { row, mass: m });
        }
        r.mapv_inplace(|x| x / m);
    }
    Ok((values, Some(mass)))
}

fn guarded(kind: PdeKind, s: &StepSettings, k: &Coefficients, dt: f64) -> Result<()> {
    if s.guard {
        check_stability(kind, s.axis, k, dt)?;
    }
    Ok(())
}

fn step_first_order(
    kind: PdeKind,
    a: &AttentionField,
    k: Coefficients,
    dt: f64,
    s: &StepSettings,
) -> Result<AttentionField> {
    guarded(kind, s, &k, dt)?;
    let dom = a.domain(s.axis);
    dom.validate()?;
    let (raw, _) = raw_update(kind, &dom, s.scheme, &k, dt, &a.values, None);
    let (values, _) = postprocess(raw, s)?;
    Ok(a.with_values(values))
}

/// `A + dt * alpha * L(A)`.
pub fn diffusion_step(
    a: &AttentionField,
    alpha: f64,
    dt: f64,
    s: &StepSettings,
) -> Result<AttentionField> {
    let k = Coefficients {
        alpha,
        ..Default::default()
    };
    step_first_order(PdeKind::Diffusion, a, k, dt, s)
}

/// `A + dt * (alpha * L(A) + beta * A (1 - A))`.
pub fn reaction_diffusion_step(
    a: &AttentionField,
    alpha: f64,
    beta: f64,
    dt: f64,
    s: &StepSettings,
) -> Result<AttentionField> {
    let k = Coefficients {
        alpha,
        beta,
        c: 0.0,
    };
    step_first_order(PdeKind::ReactionDiffusion, a, k, dt, s)
}

/// `A + dt * (alpha * L(A) - beta * D(A))`, with `D` the first difference
/// selected by `s.scheme`. Positive `beta` moves mass toward larger key
/// indices.
pub fn advection_diffusion_step(
    a: &AttentionField,
    alpha: f64,
    beta: f64,
    dt: f64,
    s: &StepSettings,
) -> Result<AttentionField> {
    let k = Coefficients {
        alpha,
        beta,
        c: 0.0,
    };
    step_first_order(PdeKind::AdvectionDiffusion, a, k, dt, s)
}

/// Velocity first, then position:
/// `V' = V + dt c^2 L(A)`, `A' = A + dt V'`.
pub fn wave_step(state: &WaveState, c: f64, dt: f64, s: &StepSettings) -> Result<WaveState> {
    let k = Coefficients {
        c,
        ..Default::default()
    };
    guarded(PdeKind::Wave, s, &k, dt)?;
    if state.v.dim() != state.a.values.dim() {
        return Err(Error::shape(
            format!("{:?}", state.a.values.dim()),
            format!("{:?}", state.v.dim()),
        ));
    }
    let dom = state.a.domain(s.axis);
    dom.validate()?;
    let (raw, v) = raw_update(
        PdeKind::Wave,
        &dom,
        s.scheme,
        &k,
        dt,
        &state.a.values,
        Some(&state.v),
    );
    let (values, _) = postprocess(raw, s)?;
    Ok(WaveState {
        a: state.a.with_values(values),
        v: v.expect("wave update yields velocity"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundaryCondition;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn field_with_row0(row: &[f64], bc: BoundaryCondition) -> AttentionField {
        let t = row.len();
        let mut v = Array2::zeros((t, t));
        v.row_mut(0).assign(&ndarray::ArrayView1::from(row));
        AttentionField::new(v, bc).unwrap()
    }

    fn row0(f: &AttentionField) -> Vec<f64> {
        f.values.row(0).to_vec()
    }

    fn assert_row(got: &[f64], want: &[f64], tol: f64) {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert_abs_diff_eq!(*g, *w, epsilon = tol);
        }
    }

    /// Independent scalar stencil used as the oracle for the hand examples.
    fn stencil_periodic(row: &[f64]) -> Vec<f64> {
        let n = row.len();
        (0..n)
            .map(|j| row[(j + n - 1) % n] - 2.0 * row[j] + row[(j + 1) % n])
            .collect()
    }

    #[test]
    fn diffusion_hand_examples() {
        let s = StepSettings::default();
        let f = field_with_row0(&[1.0, 0.0, 0.0, 0.0], BoundaryCondition::Periodic);
        let f1 = diffusion_step(&f, 0.1, 1.0, &s).unwrap();
        assert_row(&row0(&f1), &[0.8, 0.1, 0.0, 0.1], 1e-15);

        let f2 = diffusion_step(&f1, 0.1, 1.0, &s).unwrap();
        let prev = row0(&f1);
        let oracle: Vec<f64> = prev
            .iter()
            .zip(stencil_periodic(&prev))
            .map(|(x, l)| x + 0.1 * l)
            .collect();
        assert_row(&row0(&f2), &oracle, 1e-15);
        assert_row(&row0(&f2), &[0.66, 0.16, 0.02, 0.16], 1e-14);
    }

    #[test]
    fn uniform_is_fixed_point_of_diffusion() {
        let f = AttentionField::uniform(6, BoundaryCondition::ZeroFlux).unwrap();
        let out = diffusion_step(&f, 0.37, 1.1, &StepSettings::default()).unwrap();
        assert_eq!(out.values, f.values);
    }

    #[test]
    fn guard_reports_dt_max() {
        let f = AttentionField::uniform(4, BoundaryCondition::Periodic).unwrap();
        match diffusion_step(&f, 0.1, 5.5, &StepSettings::default()) {
            Err(Error::Stability { dt_max, .. }) => assert_abs_diff_eq!(dt_max, 5.0, epsilon = 1e-12),
            other => panic!("expected stability error, got {other:?}"),
        }
        let off = StepSettings {
            guard: false,
            ..Default::default()
        };
        assert!(diffusion_step(&f, 0.1, 5.5, &off).is_ok());
    }

    #[test]
    fn wave_hand_example() {
        let f = field_with_row0(&[1.0, 0.0, 0.0, 0.0], BoundaryCondition::Periodic);
        let st = wave_step(&WaveState::at_rest(f), 0.15, 1.0, &StepSettings::default()).unwrap();
        assert_row(&st.v.row(0).to_vec(), &[-0.045, 0.0225, 0.0, 0.0225], 1e-15);
        assert_row(&row0(&st.a), &[0.955, 0.0225, 0.0, 0.0225], 1e-15);
    }

    #[test]
    fn wave_uniform_rest_is_stationary() {
        let f = AttentionField::uniform(5, BoundaryCondition::Periodic).unwrap();
        let st = wave_step(&WaveState::at_rest(f.clone()), 0.15, 1.0, &StepSettings::default())
            .unwrap();
        assert_eq!(st.a.values, f.values);
        assert!(st.v.iter().all(|&v| v == 0.0));
        assert!(wave_step(&WaveState::at_rest(f), 0.15, 7.0, &StepSettings::default()).is_err());
    }

    #[test]
    fn reaction_examples() {
        let s = StepSettings::default();
        for value in [0.0, 1.0] {
            let f = AttentionField::new(Array2::from_elem((4, 4), value), BoundaryCondition::Periodic)
                .unwrap();
            let out = reaction_diffusion_step(&f, 0.0, 0.9, 1.0, &s).unwrap();
            assert_eq!(out.values, f.values);
        }
        let half =
            AttentionField::new(Array2::from_elem((4, 4), 0.5), BoundaryCondition::Periodic).unwrap();
        let out = reaction_diffusion_step(&half, 0.1, 0.02, 1.0, &s).unwrap();
        assert!(out.values.iter().all(|&v| (v - 0.505).abs() < 1e-15));

        let renorm = StepSettings {
            renormalize_rows: true,
            ..Default::default()
        };
        let out = reaction_diffusion_step(&half, 0.1, 0.02, 1.0, &renorm).unwrap();
        assert!(out.values.iter().all(|&v| (v - 0.25).abs() < 1e-15));

        let zero = AttentionField::new(Array2::zeros((3, 3)), BoundaryCondition::Periodic).unwrap();
        assert!(matches!(
            reaction_diffusion_step(&zero, 0.1, 0.02, 1.0, &renorm),
            Err(Error::DegenerateField { row: 0, .. })
        ));
    }

    #[test]
    fn advection_examples() {
        let s = StepSettings::default();
        let f = field_with_row0(&[1.0, 0.0, 0.0, 0.0], BoundaryCondition::Periodic);
        let out = advection_diffusion_step(&f, 0.0, 0.1, 1.0, &s).unwrap();
        assert_row(&row0(&out), &[0.9, 0.1, 0.0, 0.0], 1e-15);

        // superposition: diffusion increment plus upwind transport increment
        let out = advection_diffusion_step(&f, 0.1, 0.03, 1.0, &s).unwrap();
        let row = [1.0, 0.0, 0.0, 0.0];
        let lap = stencil_periodic(&row);
        let n = row.len();
        let oracle: Vec<f64> = (0..n)
            .map(|j| row[j] + 0.1 * lap[j] - 0.03 * (row[j] - row[(j + n - 1) % n]))
            .collect();
        assert_row(&row0(&out), &oracle, 1e-15);
        assert_row(&row0(&out), &[0.77, 0.13, 0.0, 0.1], 1e-15);

        let u = AttentionField::uniform(5, BoundaryCondition::Periodic).unwrap();
        let out = advection_diffusion_step(&u, 0.1, 0.03, 1.0, &s).unwrap();
        assert_eq!(out.values, u.values);
    }
}

//! Pointwise material laws.
//!
//! A phase vector `phi` has `N` components: the first `N - 1` are real
//! materials, the last is void. Density and elasticity interpolate the
//! per-phase constants through a clamped cutoff applied componentwise; the
//! void phase enters with its base constants scaled by `eps^2` so that it
//! stays uniformly positive definite without dominating the structure.

use crate::{Error, Result};

/// Smoothed two-sided clamp. Identity on `[0, 1]`, constant `-delta` below
/// `-delta - w` and constant `1 + delta` above `1 + delta + w`, joined by
/// monotone quadratic blends of half-width `w` centered at the clamp points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffParams {
    pub delta: f64,
    pub blend_halfwidth: f64,
}

impl CutoffParams {
    pub fn new(delta: f64) -> Self {
        assert!(delta > 0.0, "cutoff delta must be positive");
        Self {
            delta,
            blend_halfwidth: 0.5 * delta,
        }
    }

    /// `delta = min_i rho_i / (2 N max_i rho_i)` over the scaled phase
    /// densities, which keeps the interpolated density at or above half the
    /// smallest phase density on the whole zero-sum affine hyperplane.
    pub fn default_for(materials: &MaterialSet) -> Self {
        let n = materials.n_phases() as f64;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..materials.n_phases() {
            let d = materials.scaled_density(i);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        Self::new(lo / (2.0 * n * hi))
    }

    pub fn eval(&self, s: f64) -> f64 {
        let d = self.delta;
        let w = self.blend_halfwidth;
        if s <= -d - w {
            -d
        } else if s < -d + w {
            let t = s + d + w;
            -d + t * t / (4.0 * w)
        } else if s <= 1.0 + d - w {
            s
        } else if s < 1.0 + d + w {
            let t = 1.0 + d + w - s;
            1.0 + d - t * t / (4.0 * w)
        } else {
            1.0 + d
        }
    }

    pub fn deriv(&self, s: f64) -> f64 {
        let d = self.delta;
        let w = self.blend_halfwidth;
        if s <= -d - w {
            0.0
        } else if s < -d + w {
            (s + d + w) / (2.0 * w)
        } else if s <= 1.0 + d - w {
            1.0
        } else if s < 1.0 + d + w {
            (1.0 + d + w - s) / (2.0 * w)
        } else {
            0.0
        }
    }
}

/// Per-phase constants with derived plane-strain Lame pairs. The void phase
/// (last index) uses `eps^2`-scaled base values.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialSet {
    densities: Vec<f64>,
    youngs: Vec<f64>,
    poissons: Vec<f64>,
    void_density: f64,
    void_young: f64,
    void_poisson: f64,
    epsilon: f64,
    /// Scaled per-phase densities, void included.
    scaled_densities: Vec<f64>,
    /// Scaled per-phase `(lambda, mu)`, void included.
    lame: Vec<(f64, f64)>,
}

fn plane_strain_lame(young: f64, poisson: f64) -> (f64, f64) {
    let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    let mu = young / (2.0 * (1.0 + poisson));
    (lambda, mu)
}

impl MaterialSet {
    /// `densities`, `youngs`, `poissons` describe the `N - 1` real
    /// materials; the void phase is appended from its base constants.
    pub fn new(
        densities: &[f64],
        youngs: &[f64],
        poissons: &[f64],
        void_density: f64,
        void_young: f64,
        void_poisson: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let n_real = densities.len();
        if n_real == 0 {
            return Err(Error::InvalidArg(
                "at least one non-void material is required".into(),
            ));
        }
        if youngs.len() != n_real || poissons.len() != n_real {
            return Err(Error::DimensionMismatch(format!(
                "material table lengths differ: {} densities, {} youngs, {} poissons",
                n_real,
                youngs.len(),
                poissons.len()
            )));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArg("interface eps must be positive".into()));
        }
        for (name, vals) in [("density", densities), ("young", youngs)] {
            if vals.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::InvalidArg(format!("{name} values must be positive")));
            }
        }
        if !(void_density > 0.0) || !(void_young > 0.0) {
            return Err(Error::InvalidArg("void base values must be positive".into()));
        }
        for &nu in poissons.iter().chain(std::iter::once(&void_poisson)) {
            if !(nu > 0.0 && nu < 0.5) {
                return Err(Error::InvalidArg(format!(
                    "poisson ratio {nu} outside (0, 0.5)"
                )));
            }
        }

        let eps2 = epsilon * epsilon;
        let mut scaled_densities = densities.to_vec();
        scaled_densities.push(eps2 * void_density);
        let mut lame: Vec<(f64, f64)> = youngs
            .iter()
            .zip(poissons)
            .map(|(&e, &nu)| plane_strain_lame(e, nu))
            .collect();
        let (vl, vm) = plane_strain_lame(void_young, void_poisson);
        lame.push((eps2 * vl, eps2 * vm));

        Ok(Self {
            densities: densities.to_vec(),
            youngs: youngs.to_vec(),
            poissons: poissons.to_vec(),
            void_density,
            void_young,
            void_poisson,
            epsilon,
            scaled_densities,
            lame,
        })
    }

    /// Two-phase set (one material plus void) with unit base constants,
    /// handy for tests.
    pub fn two_phase(epsilon: f64) -> Self {
        Self::new(&[1.0], &[1.0], &[0.3], 1.0, 1.0, 0.3, epsilon).unwrap()
    }

    /// Phase count including void.
    pub fn n_phases(&self) -> usize {
        self.densities.len() + 1
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Scaled density of phase `i` (void already carries `eps^2`).
    pub fn scaled_density(&self, i: usize) -> f64 {
        self.scaled_densities[i]
    }

    /// Scaled plane-strain `(lambda, mu)` of phase `i`.
    pub fn lame(&self, i: usize) -> (f64, f64) {
        self.lame[i]
    }

    /// Uniform density floor on the zero-sum hyperplane under the default
    /// cutoff: half the smallest scaled phase density.
    pub fn density_floor(&self) -> f64 {
        0.5 * self
            .scaled_densities
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    fn check_phase_dim(&self, len: usize) -> Result<()> {
        if len != self.n_phases() {
            return Err(Error::DimensionMismatch(format!(
                "phase vector has {len} components, material set has {}",
                self.n_phases()
            )));
        }
        Ok(())
    }
}

/// Interpolated density `rho(phi) = sum_i rho_i sigma(phi_i)`.
pub fn density(phi: &[f64], mats: &MaterialSet, p: &CutoffParams) -> Result<f64> {
    mats.check_phase_dim(phi.len())?;
    Ok(phi
        .iter()
        .enumerate()
        .map(|(i, &s)| mats.scaled_density(i) * p.eval(s))
        .sum())
}

/// Directional derivative `rho'(phi) h`; linear in `h`.
pub fn density_deriv(phi: &[f64], h: &[f64], mats: &MaterialSet, p: &CutoffParams) -> Result<f64> {
    mats.check_phase_dim(phi.len())?;
    mats.check_phase_dim(h.len())?;
    Ok(phi
        .iter()
        .zip(h)
        .enumerate()
        .map(|(i, (&s, &hi))| mats.scaled_density(i) * p.deriv(s) * hi)
        .sum())
}

fn check_symmetric(a: &[[f64; 2]; 2]) -> Result<()> {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if (a[0][1] - a[1][0]).abs() > 1e-12 * scale.max(1.0) {
        return Err(Error::InvalidArg(format!(
            "strain must be symmetric, off-diagonal entries {} vs {}",
            a[0][1], a[1][0]
        )));
    }
    Ok(())
}

fn isotropic_apply(a: &[[f64; 2]; 2], lambda: f64, mu: f64) -> [[f64; 2]; 2] {
    let tr = a[0][0] + a[1][1];
    [
        [2.0 * mu * a[0][0] + lambda * tr, 2.0 * mu * a[0][1]],
        [2.0 * mu * a[1][0], 2.0 * mu * a[1][1] + lambda * tr],
    ]
}

/// Stress `C(phi) A` for a symmetric strain `A`.
pub fn elasticity_apply(
    phi: &[f64],
    strain: &[[f64; 2]; 2],
    mats: &MaterialSet,
    p: &CutoffParams,
) -> Result<[[f64; 2]; 2]> {
    mats.check_phase_dim(phi.len())?;
    check_symmetric(strain)?;
    let (mut lambda, mut mu) = (0.0, 0.0);
    for (i, &s) in phi.iter().enumerate() {
        let w = p.eval(s);
        let (l_i, m_i) = mats.lame(i);
        lambda += w * l_i;
        mu += w * m_i;
    }
    Ok(isotropic_apply(strain, lambda, mu))
}

/// Directional tensor derivative `(C'(phi) h) A`; linear in `h` and `A`.
pub fn elasticity_deriv_apply(
    phi: &[f64],
    h: &[f64],
    strain: &[[f64; 2]; 2],
    mats: &MaterialSet,
    p: &CutoffParams,
) -> Result<[[f64; 2]; 2]> {
    mats.check_phase_dim(phi.len())?;
    mats.check_phase_dim(h.len())?;
    check_symmetric(strain)?;
    let (mut lambda, mut mu) = (0.0, 0.0);
    for (i, (&s, &hi)) in phi.iter().zip(h).enumerate() {
        let w = p.deriv(s) * hi;
        let (l_i, m_i) = mats.lame(i);
        lambda += w * l_i;
        mu += w * m_i;
    }
    Ok(isotropic_apply(strain, lambda, mu))
}

/// Smooth bulk potential `psi0(phi) = (1 - |phi|^2) / 2`. The simplex
/// obstacle is enforced by projection, not here.
pub fn bulk_potential(phi: &[f64]) -> f64 {
    0.5 * (1.0 - phi.iter().map(|&v| v * v).sum::<f64>())
}

/// Gradient of [`bulk_potential`], `-phi`.
pub fn bulk_potential_deriv(phi: &[f64]) -> Vec<f64> {
    phi.iter().map(|&v| -v).collect()
}

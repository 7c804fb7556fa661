//! Model problems: periodic 1D diffusion, random checkerboard diffusion,
//! 1D Helmholtz and 2D scattering from a sound-soft triangle.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, DomainSpec, Mesh, MeshHierarchy};
use crate::scalar::{Complex64, Field, Scalar};

/// SplitMix64 generator (Steele, Lea, Flood). The `k`-th output (k ≥ 1) of a
/// stream seeded with `s` is `mix(s + k·0x9E3779B97F4A7C15)`.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        Self::mix(self.state)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// The `k`-th output of the stream seeded with `seed`, without iterating.
    pub fn nth(seed: u64, k: u64) -> u64 {
        Self::mix(seed.wrapping_add(k.wrapping_mul(GOLDEN_GAMMA)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProblemKind {
    Diffusion,
    Helmholtz { kappa: f64 },
}

/// Scalar diffusion coefficient, sampled once per fine element at its centroid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coefficient {
    Constant(f64),
    /// `A(x) = 1 / (2 + cos(2πx/ε))`.
    Periodic1d { eps: f64 },
    /// Piecewise constant on a `2^level × 2^level` grid; cell `c = j·2^level + i`
    /// (row-major from the origin) takes `lo + (hi − lo)·u` where `u` uses the
    /// top 53 bits of the `(c+1)`-th SplitMix64 output for `seed`.
    Checkerboard { level: u32, seed: u64, lo: f64, hi: f64 },
}

impl Coefficient {
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        match *self {
            Coefficient::Constant(a) => a,
            Coefficient::Periodic1d { eps } => 1.0 / (2.0 + (2.0 * PI * p[0] / eps).cos()),
            Coefficient::Checkerboard { level, seed, lo, hi } => {
                let n = 1u64 << level;
                let cell = |x: f64| ((x * n as f64).floor() as u64).min(n - 1);
                let c = cell(p[1]) * n + cell(p[0]);
                let u = (SplitMix64::nth(seed, c + 1) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                lo + (hi - lo) * u
            }
        }
    }

    /// Values of the coefficient's grid cells (checkerboard only), row-major.
    pub fn cell_values(&self) -> Option<Vec<f64>> {
        let Coefficient::Checkerboard { level, .. } = *self else {
            return None;
        };
        let n = 1usize << level;
        let w = 1.0 / n as f64;
        Some(
            (0..n * n)
                .map(|c| self.eval([((c % n) as f64 + 0.5) * w, ((c / n) as f64 + 0.5) * w]))
                .collect(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Source {
    Constant(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DirichletData {
    Zero,
    Constant(f64),
    /// `−exp(iκ x·(cos θ, sin θ))`, the negative of an incident plane wave.
    NegPlaneWave { kappa: f64, angle: f64 },
}

impl DirichletData {
    pub fn value<S: Scalar>(&self, p: [f64; 2]) -> Result<S> {
        match *self {
            DirichletData::Zero => Ok(S::ZERO),
            DirichletData::Constant(c) => Ok(S::of_real(c)),
            DirichletData::NegPlaneWave { kappa, angle } => {
                if S::FIELD == Field::Real {
                    return Err(Error::InvalidProblem("plane-wave data needs complex scalars".into()));
                }
                let u = incident_wave(kappa, angle, p);
                Ok(S::from_parts(-u.re, -u.im))
            }
        }
    }
}

/// `exp(iκ x·(cos θ, sin θ))`.
pub fn incident_wave(kappa: f64, angle: f64, p: [f64; 2]) -> Complex64 {
    let phase = kappa * (p[0] * angle.cos() + p[1] * angle.sin());
    Complex64::new(phase.cos(), phase.sin())
}

/// Complete description of a boundary value problem.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub name: String,
    pub kind: ProblemKind,
    pub domain: DomainSpec,
    pub coefficient: Coefficient,
    pub source: Source,
    pub dirichlet: DirichletData,
}

impl ProblemSpec {
    pub fn new(
        name: &str,
        kind: ProblemKind,
        domain: DomainSpec,
        coefficient: Coefficient,
        source: Source,
        dirichlet: DirichletData,
    ) -> Result<Self> {
        let spec = Self {
            name: name.to_string(),
            kind,
            domain,
            coefficient,
            source,
            dirichlet,
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<()> {
        match self.coefficient {
            Coefficient::Constant(a) if !(a > 0.0) => {
                return Err(Error::InvalidCoefficient(format!("constant coefficient {a} is not positive")))
            }
            Coefficient::Periodic1d { eps } if !(eps > 0.0) || self.domain.dim() != 1 => {
                return Err(Error::InvalidProblem(format!("periodic coefficient with ε = {eps}")))
            }
            Coefficient::Checkerboard { lo, hi, .. } if !(lo > 0.0 && hi >= lo) => {
                return Err(Error::InvalidCoefficient(format!("checkerboard range [{lo}, {hi}]")))
            }
            _ => {}
        }
        if let ProblemKind::Helmholtz { kappa } = self.kind {
            if !(kappa > 0.0) || !kappa.is_finite() {
                return Err(Error::InvalidProblem(format!("wave number {kappa} must be positive")));
            }
            if self.coefficient != Coefficient::Constant(1.0) {
                return Err(Error::InvalidProblem("Helmholtz problems use the unit coefficient".into()));
            }
            let has_robin = match &self.domain {
                DomainSpec::Interval { left, right } => *left == BoundaryTag::Robin || *right == BoundaryTag::Robin,
                DomainSpec::Square { outer } => *outer == BoundaryTag::Robin,
                DomainSpec::SquareWithHole { outer, hole_tag, .. } => {
                    *outer == BoundaryTag::Robin || *hole_tag == BoundaryTag::Robin
                }
            };
            if !has_robin {
                return Err(Error::InvalidProblem("Helmholtz problem without a Robin boundary".into()));
            }
        }
        if self.kind == ProblemKind::Diffusion {
            if let DirichletData::NegPlaneWave { .. } = self.dirichlet {
                return Err(Error::InvalidProblem("plane-wave data for a real diffusion problem".into()));
            }
        }
        Ok(())
    }

    pub fn field(&self) -> Field {
        match self.kind {
            ProblemKind::Diffusion => Field::Real,
            ProblemKind::Helmholtz { .. } => Field::Complex,
        }
    }

    pub fn kappa(&self) -> Option<f64> {
        match self.kind {
            ProblemKind::Helmholtz { kappa } => Some(kappa),
            ProblemKind::Diffusion => None,
        }
    }

    /// One coefficient value per element of `mesh`.
    pub fn coefficient_field(&self, mesh: &Mesh) -> Vec<f64> {
        (0..mesh.num_elements())
            .map(|e| self.coefficient.eval(mesh.centroid(e)))
            .collect()
    }

    /// Rejects hierarchies that do not resolve the data and logs resolution
    /// warnings. Returns the warning messages.
    pub fn check_resolution(&self, hier: &MeshHierarchy) -> Result<Vec<String>> {
        if hier.fine.dim() != self.domain.dim() {
            return Err(Error::InvalidProblem("mesh dimension does not match the problem".into()));
        }
        let h = hier.fine_width();
        match self.coefficient {
            Coefficient::Periodic1d { eps } if h > eps / 8.0 => {
                return Err(Error::InvalidProblem(format!(
                    "fine width {h} does not resolve ε = {eps} (need h ≤ ε/8)"
                )))
            }
            _ => {}
        }
        if let DirichletData::NegPlaneWave { .. } = self.dirichlet {
            if !matches!(self.domain, DomainSpec::SquareWithHole { .. }) {
                return Err(Error::InvalidProblem("scattering problem without a scatterer".into()));
            }
        }
        let mut warnings = Vec::new();
        if let Coefficient::Checkerboard { level, .. } = self.coefficient {
            if hier.fine.level() < level {
                let msg = format!(
                    "fine level {} is coarser than the 2^-{level} coefficient grid: cells are sampled at element midpoints",
                    hier.fine.level()
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
        if let Some(kappa) = self.kappa() {
            let hk = hier.coarse_width() * kappa;
            if hk > 1.0 {
                let msg = format!("Hκ = {hk} exceeds 1: localized cell problems may lose coercivity");
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
        Ok(warnings)
    }

    /// Canonical serialization, stable across runs and platforms.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let f = |x: f64| format!("{:016x}", x.to_bits());
        let mut s = String::new();
        s.push_str(&format!("name={}\n", self.name));
        match self.kind {
            ProblemKind::Diffusion => s.push_str("kind=diffusion\n"),
            ProblemKind::Helmholtz { kappa } => s.push_str(&format!("kind=helmholtz;kappa={}\n", f(kappa))),
        }
        match &self.domain {
            DomainSpec::Interval { left, right } => {
                s.push_str(&format!("domain=interval;{};{}\n", left.name(), right.name()))
            }
            DomainSpec::Square { outer } => s.push_str(&format!("domain=square;{}\n", outer.name())),
            DomainSpec::SquareWithHole { outer, hole, hole_tag } => {
                s.push_str(&format!("domain=square-hole;{};{}", outer.name(), hole_tag.name()));
                for v in hole {
                    s.push_str(&format!(";{},{}", f(v[0]), f(v[1])));
                }
                s.push('\n');
            }
        }
        match self.coefficient {
            Coefficient::Constant(a) => s.push_str(&format!("coefficient=constant;{}\n", f(a))),
            Coefficient::Periodic1d { eps } => s.push_str(&format!("coefficient=periodic;{}\n", f(eps))),
            Coefficient::Checkerboard { level, seed, lo, hi } => s.push_str(&format!(
                "coefficient=checkerboard;{level};{seed};{};{}\n",
                f(lo),
                f(hi)
            )),
        }
        match self.source {
            Source::Constant(c) => s.push_str(&format!("source=constant;{}\n", f(c))),
        }
        match self.dirichlet {
            DirichletData::Zero => s.push_str("dirichlet=zero\n"),
            DirichletData::Constant(c) => s.push_str(&format!("dirichlet=constant;{}\n", f(c))),
            DirichletData::NegPlaneWave { kappa, angle } => {
                s.push_str(&format!("dirichlet=neg-plane-wave;{};{}\n", f(kappa), f(angle)))
            }
        }
        s.into_bytes()
    }
}

/// `−(A_ε u')' = 4` on (0,1) with homogeneous Dirichlet conditions.
pub fn periodic_1d(eps: f64) -> Result<ProblemSpec> {
    let k = -eps.log2();
    if !(eps > 0.0) || k < 1.0 || (k - k.round()).abs() > 1e-12 {
        return Err(Error::InvalidProblem(format!("ε = {eps} is not 2^-k with k ≥ 1")));
    }
    ProblemSpec::new(
        "periodic1d",
        ProblemKind::Diffusion,
        DomainSpec::Interval {
            left: BoundaryTag::Dirichlet,
            right: BoundaryTag::Dirichlet,
        },
        Coefficient::Periodic1d { eps },
        Source::Constant(4.0),
        DirichletData::Zero,
    )
}

/// Exact solution of [`periodic_1d`], obtained by integrating the flux `2 − 4x`.
pub fn periodic_1d_exact(eps: f64, x: f64) -> f64 {
    4.0 * (x - x * x) + 4.0 * eps * periodic_1d_oscillation(eps, x)
}

/// The same closed form with the sign of the oscillatory bracket flipped, as it
/// is sometimes quoted; kept for comparison only.
pub fn periodic_1d_flipped(eps: f64, x: f64) -> f64 {
    4.0 * (x - x * x) - 4.0 * eps * periodic_1d_oscillation(eps, x)
}

fn periodic_1d_oscillation(eps: f64, x: f64) -> f64 {
    let a = 2.0 * PI * x / eps;
    a.sin() / (4.0 * PI) - x * a.sin() / (2.0 * PI) + eps / (4.0 * PI * PI) * (1.0 - a.cos())
}

/// Homogenized limit `4(x − x²)` (harmonic mean 1/2 of the coefficient).
pub fn periodic_1d_homogenized(x: f64) -> f64 {
    4.0 * (x - x * x)
}

/// Limit of coarse P1 FEM, `2√3(x − x²)` (arithmetic mean 1/√3 of the coefficient).
pub fn periodic_1d_arithmetic(x: f64) -> f64 {
    2.0 * 3f64.sqrt() * (x - x * x)
}

/// Random checkerboard diffusion on the unit square: `f ≡ 1`, values in [1, 10]
/// on a `2^-6` grid, homogeneous Dirichlet conditions.
pub fn random_checkerboard(seed: u64) -> ProblemSpec {
    ProblemSpec::new(
        "checkerboard",
        ProblemKind::Diffusion,
        DomainSpec::Square {
            outer: BoundaryTag::Dirichlet,
        },
        Coefficient::Checkerboard {
            level: 6,
            seed,
            lo: 1.0,
            hi: 10.0,
        },
        Source::Constant(1.0),
        DirichletData::Zero,
    )
    .expect("valid checkerboard problem")
}

/// `−u'' − κ²u = 0` on (0,1), `u(0) = 1`, Robin at `x = 1`.
pub fn helmholtz_1d(kappa: f64) -> Result<ProblemSpec> {
    ProblemSpec::new(
        "helmholtz1d",
        ProblemKind::Helmholtz { kappa },
        DomainSpec::Interval {
            left: BoundaryTag::Dirichlet,
            right: BoundaryTag::Robin,
        },
        Coefficient::Constant(1.0),
        Source::Constant(0.0),
        DirichletData::Constant(1.0),
    )
}

/// Exact solution of [`helmholtz_1d`] under the Robin condition `u' = iκu`
/// carried by the operator's `−iκ` boundary term: `exp(iκx)`.
pub fn helmholtz_1d_exact(kappa: f64, x: f64) -> Complex64 {
    Complex64::new((kappa * x).cos(), (kappa * x).sin())
}

/// Vertices of the sound-soft scatterer.
pub const SCATTERER: [[f64; 2]; 3] = [[0.25, 0.25], [0.75, 0.75], [0.25, 0.75]];

/// Incident direction angle of the scattering experiment.
pub const INCIDENT_ANGLE: f64 = 0.5;

/// Scattering of `exp(iκ x·(cos 0.5, sin 0.5))` from the sound-soft triangle
/// [`SCATTERER`]; Robin condition on the outer square.
pub fn scattering_2d(kappa: f64) -> Result<ProblemSpec> {
    ProblemSpec::new(
        "scatter2d",
        ProblemKind::Helmholtz { kappa },
        DomainSpec::SquareWithHole {
            outer: BoundaryTag::Robin,
            hole: SCATTERER,
            hole_tag: BoundaryTag::Dirichlet,
        },
        Coefficient::Constant(1.0),
        Source::Constant(0.0),
        DirichletData::NegPlaneWave {
            kappa,
            angle: INCIDENT_ANGLE,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // published test vector for seed 1234567
        let mut r = SplitMix64::new(1234567);
        let expect = [
            6457827717110365317u64,
            3203168211198807973,
            9817491932198370423,
            4593380528125082431,
            16408922859458223821,
        ];
        for e in expect {
            assert_eq!(r.next_u64(), e);
        }
        assert_eq!(SplitMix64::nth(1234567, 3), 9817491932198370423);
    }

    #[test]
    fn periodic_coefficient_extremes() {
        let c = Coefficient::Periodic1d { eps: 0.125 };
        assert!((c.eval([0.0, 0.0]) - 1.0 / 3.0).abs() < 1e-15);
        assert!((c.eval([0.0625, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn periodic_harmonic_mean_is_half() {
        let eps = 0.25;
        let c = Coefficient::Periodic1d { eps };
        let n = 4096;
        let inv_mean: f64 = (0..n).map(|k| 1.0 / c.eval([(k as f64 + 0.5) * eps / n as f64, 0.0])).sum::<f64>() / n as f64;
        assert!((1.0 / inv_mean - 0.5).abs() < 1e-12);
    }

    #[test]
    fn periodic_exact_solves_the_equation() {
        let eps = 1.0 / 32.0;
        assert!(periodic_1d_exact(eps, 0.0).abs() < 1e-15);
        assert!(periodic_1d_exact(eps, 1.0).abs() < 1e-14);
        // flux A u' must be 2 − 4x
        let c = Coefficient::Periodic1d { eps };
        for k in 1..50 {
            let x = k as f64 / 51.0;
            let d = 1e-6;
            let du = (periodic_1d_exact(eps, x + d) - periodic_1d_exact(eps, x - d)) / (2.0 * d);
            assert!((c.eval([x, 0.0]) * du - (2.0 - 4.0 * x)).abs() < 1e-6);
        }
    }

    #[test]
    fn periodic_rejects_bad_eps() {
        assert!(periodic_1d(0.3).is_err());
        assert!(periodic_1d(1.0).is_err());
        let p = periodic_1d(1.0 / 32.0).unwrap();
        let coarse_fine = MeshHierarchy::build(&p.domain, 3, 7).unwrap();
        assert!(p.check_resolution(&coarse_fine).is_err());
        let ok = MeshHierarchy::build(&p.domain, 3, 8).unwrap();
        assert!(p.check_resolution(&ok).is_ok());
    }

    #[test]
    fn checkerboard_determinism_and_range() {
        let a = random_checkerboard(7).coefficient.cell_values().unwrap();
        let b = random_checkerboard(7).coefficient.cell_values().unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(a.len(), 4096);
        assert!(a.iter().all(|v| (1.0..=10.0).contains(v)));
        let c = random_checkerboard(8).coefficient.cell_values().unwrap();
        let differ = a.iter().zip(&c).filter(|(x, y)| x != y).count();
        assert!(differ as f64 > 0.9 * a.len() as f64);
        // cell 0 is the first stream output
        let u = (SplitMix64::new(7).next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        assert_eq!(a[0], 1.0 + 9.0 * u);
    }

    #[test]
    fn checkerboard_sampled_per_fine_element() {
        let p = random_checkerboard(7);
        let h = MeshHierarchy::build(&p.domain, 2, 7).unwrap();
        let field = p.coefficient_field(&h.fine);
        let cells = p.coefficient.cell_values().unwrap();
        for e in 0..h.fine.num_elements() {
            let c = h.fine.centroid(e);
            let idx = (c[1] * 64.0).floor() as usize * 64 + (c[0] * 64.0).floor() as usize;
            assert_eq!(field[e], cells[idx]);
        }
    }

    #[test]
    fn helmholtz_exact_satisfies_robin() {
        let kappa = 17.0;
        let d = 1e-6;
        let du = (helmholtz_1d_exact(kappa, 1.0 + d) - helmholtz_1d_exact(kappa, 1.0 - d)) / (2.0 * d);
        let r = du - Complex64::new(0.0, kappa) * helmholtz_1d_exact(kappa, 1.0);
        assert!(r.norm() < 1e-5);
        assert_eq!(helmholtz_1d_exact(kappa, 0.0), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn scattering_data() {
        let p = scattering_2d(32.0).unwrap();
        for q in [[0.1, 0.9], [0.5, 0.2]] {
            assert!((incident_wave(32.0, 0.5, q).norm() - 1.0).abs() < 1e-15);
        }
        let v: Complex64 = p.dirichlet.value([0.25, 0.25]).unwrap();
        let phase = 32.0 * 0.25 * (0.5f64.cos() + 0.5f64.sin());
        assert!((v - Complex64::new(-phase.cos(), -phase.sin())).norm() < 1e-15);
        assert!(p.dirichlet.value::<f64>([0.25, 0.25]).is_err());
        let mut no_hole = p.clone();
        no_hole.domain = DomainSpec::Square {
            outer: BoundaryTag::Robin,
        };
        let h = MeshHierarchy::build(&no_hole.domain, 2, 3).unwrap();
        assert!(no_hole.check_resolution(&h).is_err());
    }

    #[test]
    fn canonical_bytes_distinguish_specs() {
        assert_eq!(random_checkerboard(7).canonical_bytes(), random_checkerboard(7).canonical_bytes());
        assert_ne!(random_checkerboard(7).canonical_bytes(), random_checkerboard(8).canonical_bytes());
        assert_ne!(
            helmholtz_1d(8.0).unwrap().canonical_bytes(),
            helmholtz_1d(8.5).unwrap().canonical_bytes()
        );
    }

    #[test]
    fn construction_rejects_invalid_specs() {
        assert!(helmholtz_1d(0.0).is_err());
        assert!(ProblemSpec::new(
            "x",
            ProblemKind::Diffusion,
            DomainSpec::Square {
                outer: BoundaryTag::Dirichlet
            },
            Coefficient::Constant(-1.0),
            Source::Constant(1.0),
            DirichletData::Zero
        )
        .is_err());
        assert!(ProblemSpec::new(
            "x",
            ProblemKind::Helmholtz { kappa: 2.0 },
            DomainSpec::Square {
                outer: BoundaryTag::Dirichlet
            },
            Coefficient::Constant(1.0),
            Source::Constant(0.0),
            DirichletData::Zero
        )
        .is_err());
    }
}

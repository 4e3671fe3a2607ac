//! JSON run configuration.

use std::path::{Path, PathBuf};

use lagflow::dynamics::{grid_initialization, BoundaryPolicy, FlowConfig};
use lagflow::geometry::{ConvexPolygon, DomainGeometry, ParticleSet, Vec2};
use lagflow::potentials::{KernelSpec, PotentialSpec};
use lagflow::presets;
use lagflow::TransportMode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Crowd,
    Entropy,
}

impl From<Mode> for TransportMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Crowd => TransportMode::Crowd,
            Mode::Entropy => TransportMode::Entropy,
        }
    }
}

/// Grid spacing given as a number or as a rational string such as `"1/20"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RationalRepr", into = "f64")]
pub struct Spacing(pub f64);

#[derive(Deserialize)]
#[serde(untagged)]
enum RationalRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<RationalRepr> for Spacing {
    type Error = String;
    fn try_from(r: RationalRepr) -> Result<Self, String> {
        let v = match r {
            RationalRepr::Number(v) => v,
            RationalRepr::Text(s) => parse_rational(&s)?,
        };
        if v > 0.0 && v.is_finite() {
            Ok(Spacing(v))
        } else {
            Err(format!("grid spacing must be positive, got {v}"))
        }
    }
}

impl From<Spacing> for f64 {
    fn from(s: Spacing) -> f64 {
        s.0
    }
}

/// Parses `"p/q"` or a decimal number.
pub fn parse_rational(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
            let q: f64 = q.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
            p / q
        }
        None => s.parse().map_err(|_| format!("not a number: {s:?}"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("not a finite number: {s:?}"))
    }
}

fn default_segments() -> usize {
    presets::DEFAULT_ARC_SEGMENTS
}

fn default_alpha() -> f64 {
    presets::bimodal_alpha()
}

fn default_radius() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    /// Quarter sector `x₂ ≥ |x₁|, |x| ≤ R` with a polygonized arc.
    Radial {
        #[serde(rename = "R", default = "default_radius")]
        r: f64,
        #[serde(default = "default_segments")]
        segments: usize,
    },
    /// Two rooms and a corridor scaled by `alpha`.
    Bimodal {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Square {
        #[serde(default)]
        origin: [f64; 2],
        side: f64,
    },
    /// Union of convex polygons with disjoint interiors.
    Polygons { pieces: Vec<Vec<[f64; 2]>> },
}

fn v2(p: &[f64; 2]) -> Vec2 {
    Vec2::new(p[0], p[1])
}

impl DomainSpec {
    pub fn build(&self) -> lagflow::Result<DomainGeometry> {
        match self {
            DomainSpec::Radial { r, segments } => presets::radial_sector(*r, *segments),
            DomainSpec::Bimodal { alpha } => Ok(presets::bimodal(*alpha)?.domain),
            DomainSpec::Square { origin, side } => presets::square(origin[0], origin[1], *side),
            DomainSpec::Polygons { pieces } => DomainGeometry::new(
                pieces
                    .iter()
                    .map(|p| ConvexPolygon::new(p.iter().map(v2).collect()))
                    .collect::<lagflow::Result<Vec<_>>>()?,
            ),
        }
    }
}

/// A region used to seed particles or to detect arrivals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionSpec {
    /// The whole domain.
    Domain,
    /// Left room of the bimodal preset.
    LeftRoom,
    /// Right room of the bimodal preset.
    RightRoom,
    Disk { center: [f64; 2], radius: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum PotentialConfig {
    #[default]
    Zero,
    Norm {
        #[serde(default)]
        center: [f64; 2],
    },
    Quadratic {
        #[serde(default)]
        center: [f64; 2],
    },
    Linear { gradient: [f64; 2] },
    /// Distance to `targets` inside the domain; the bimodal preset supplies
    /// its exits when `targets` is omitted. `h_fmm` defaults to `h/2`.
    Eikonal {
        #[serde(default)]
        targets: Option<Vec<[f64; 2]>>,
        #[serde(default)]
        h_fmm: Option<f64>,
    },
}


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Quadratic { strength: f64 },
    Gaussian { strength: f64, width: f64 },
}

impl From<KernelConfig> for KernelSpec {
    fn from(k: KernelConfig) -> Self {
        match k {
            KernelConfig::Quadratic { strength } => KernelSpec::Quadratic { strength },
            KernelConfig::Gaussian { strength, width } => KernelSpec::Gaussian { strength, width },
        }
    }
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub domain: DomainSpec,
    /// Grid spacing: seeds `Ω ∩ hℤ²` (or `init_region ∩ hℤ²`) and sets the
    /// defaults `τ = h/2`, `ε = h`.
    #[serde(default)]
    pub h: Option<Spacing>,
    /// Number of uniformly random initial particles (uses `seed`).
    #[serde(default)]
    pub n: Option<usize>,
    /// Explicit initial positions.
    #[serde(default)]
    pub positions: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub init_region: Option<RegionSpec>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub kernel: Option<KernelConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default)]
    pub export_cells: bool,
    #[serde(default)]
    pub boundary_policy: BoundaryPolicy,
    /// Region whose first-entry times go to `timeout.csv`; the bimodal
    /// preset defaults to its right room.
    #[serde(default)]
    pub exit_region: Option<RegionSpec>,
}

/// Everything needed to start a run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub domain: DomainGeometry,
    pub particles: ParticleSet,
    pub flow: FlowConfig,
    pub exit_region: Option<ConvexPolygon>,
    /// Reference point for the door-adjacency check (bimodal only).
    pub door: Option<Vec2>,
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Config(format!("at `{}`: {}", e.path(), e.inner())))
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config_str(&text)
}

fn config_err(e: lagflow::Error) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    fn bimodal(&self) -> Option<lagflow::Result<presets::Bimodal>> {
        match self.domain {
            DomainSpec::Bimodal { alpha } => Some(presets::bimodal(alpha)),
            _ => None,
        }
    }

    fn region(&self, spec: &RegionSpec, dom: &DomainGeometry) -> Result<DomainGeometry, CliError> {
        let room = |right: bool| -> Result<DomainGeometry, CliError> {
            let b = self
                .bimodal()
                .ok_or_else(|| CliError::Config("room regions need the bimodal domain".into()))?
                .map_err(config_err)?;
            Ok(DomainGeometry::single(if right { b.right } else { b.left }))
        };
        match spec {
            RegionSpec::Domain => Ok(dom.clone()),
            RegionSpec::LeftRoom => room(false),
            RegionSpec::RightRoom => room(true),
            RegionSpec::Disk { center, radius } => {
                // intersect the disk with the domain pointwise; the bounding
                // square is what grid seeding scans
                let c = v2(center);
                let sq = ConvexPolygon::rectangle(c.x - radius, c.y - radius, c.x + radius, c.y + radius).map_err(config_err)?;
                Ok(DomainGeometry::single(sq))
            }
            RegionSpec::Polygon { vertices } => Ok(DomainGeometry::single(
                ConvexPolygon::new(vertices.iter().map(v2).collect()).map_err(config_err)?,
            )),
        }
    }

    fn initial_positions(&self, dom: &DomainGeometry) -> Result<Vec<Vec2>, CliError> {
        let sources = [self.positions.is_some(), self.n.is_some()];
        if sources.iter().filter(|&&s| s).count() > 1 {
            return Err(CliError::Config("give at most one of `positions` and `n`".into()));
        }
        let spec = self.init_region.clone().unwrap_or(RegionSpec::Domain);
        let region = self.region(&spec, dom)?;
        let disk = match spec {
            RegionSpec::Disk { center, radius } => Some((v2(&center), radius)),
            _ => None,
        };
        let keep = |p: &Vec2, tol: f64| {
            dom.contains_tol(p, tol) && disk.is_none_or(|(c, r)| (p - c).norm() <= r + tol)
        };
        if let Some(p) = &self.positions {
            return Ok(p.iter().map(v2).collect());
        }
        if let Some(n) = self.n {
            if n == 0 {
                return Err(CliError::Config("`n` must be positive".into()));
            }
            let (lo, hi) = region.bbox();
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            let mut out = Vec::with_capacity(n);
            let mut tries = 0usize;
            while out.len() < n {
                let p = Vec2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
                if region.contains(&p) && keep(&p, 0.0) {
                    out.push(p);
                }
                tries += 1;
                if tries > 1000 * n + 10_000 {
                    return Err(CliError::Config("initial region is (nearly) empty".into()));
                }
            }
            return Ok(out);
        }
        let h = self
            .h
            .ok_or_else(|| CliError::Config("one of `h`, `n` or `positions` is required".into()))?
            .0;
        let pts = grid_initialization(&region, h).map_err(config_err)?;
        let tol = 1e-9 * h;
        let pts: Vec<Vec2> = pts.into_iter().filter(|p| keep(p, tol)).collect();
        if pts.is_empty() {
            return Err(CliError::Config(lagflow::Error::EmptyGrid.to_string()));
        }
        // grid points on a boundary may sit a rounding error outside
        Ok(pts.into_iter().map(|p| if dom.contains(&p) { p } else { dom.closest_point(&p) }).collect())
    }

    /// Builds the domain, the initial particles and the flow parameters.
    pub fn prepare(&self) -> Result<Prepared, CliError> {
        let domain = self.domain.build().map_err(config_err)?;
        let h = self.h.map(|s| s.0);
        let tau = self.tau.or(h.map(|h| 0.5 * h)).ok_or_else(|| CliError::Config("`tau` or `h` is required".into()))?;
        let eps = self.eps.or(h).ok_or_else(|| CliError::Config("`eps` or `h` is required".into()))?;
        let bimodal = self.bimodal().transpose().map_err(config_err)?;
        let potential = match &self.potential {
            PotentialConfig::Zero => PotentialSpec::Zero,
            PotentialConfig::Norm { center } => PotentialSpec::Norm { center: v2(center) },
            PotentialConfig::Quadratic { center } => PotentialSpec::Quadratic { center: v2(center) },
            PotentialConfig::Linear { gradient } => PotentialSpec::Linear { gradient: v2(gradient) },
            PotentialConfig::Eikonal { targets, h_fmm } => {
                let targets = match (targets, &bimodal) {
                    (Some(t), _) => t.iter().map(v2).collect(),
                    (None, Some(b)) => b.targets.to_vec(),
                    (None, None) => return Err(CliError::Config("eikonal potential needs `targets`".into())),
                };
                let h_fmm = h_fmm
                    .or(h.map(|h| 0.5 * h))
                    .ok_or_else(|| CliError::Config("eikonal potential needs `h_fmm` or `h`".into()))?;
                PotentialSpec::Eikonal { targets, h_fmm }
            }
        };
        let flow = FlowConfig {
            mode: self.mode.into(),
            tau,
            eps,
            t_final: self.t_final,
            potential,
            kernel: self.kernel.map(Into::into),
            boundary_policy: self.boundary_policy,
            snapshot_stride: self.snapshot_stride,
            keep_cells: self.export_cells,
            newton: Default::default(),
        };
        flow.validate().map_err(config_err)?;
        let positions = self.initial_positions(&domain)?;
        if let Some(i) = positions.iter().position(|p| !domain.contains(p)) {
            return Err(CliError::Config(format!("initial particle {i} lies outside the domain")));
        }
        let particles = ParticleSet::new(positions, eps).map_err(config_err)?;
        let exit_region = match (&self.exit_region, &bimodal) {
            (Some(spec), _) => {
                let r = self.region(spec, &domain)?;
                match r.pieces() {
                    [one] => Some(one.clone()),
                    _ => return Err(CliError::Config("exit region must be a single convex polygon".into())),
                }
            }
            (None, Some(b)) => Some(b.right.clone()),
            (None, None) => None,
        };
        let door = bimodal.as_ref().map(|b| Vec2::new(b.alpha, 0.5 * b.alpha));
        Ok(Prepared { domain, particles, flow, exit_region, door })
    }
}

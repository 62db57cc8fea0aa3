//! Network model: buses, branches, loads, inverter units, and the nodal
//! admittance matrix.
//!
//! Grids are data, not code: they load from a TOML document with `[[buses]]`,
//! `[[branches]]`, `[[loads]]` and `[[units]]` tables carrying SI units
//! (ohm/km, uS/km, km, kV, MW, MVAr, MVA). Per-unit conversion happens here,
//! against `s_base_mva` and the bus voltage bases, so corrections to network
//! data never require recompilation.
//!
//! Branch model: standard pi-equivalent. A branch's series impedance is
//! `(r + jx) * length` in ohms referred to the *to*-side voltage base (for
//! lines both sides share a base; for transformers the to side is the LV
//! side). Transformers are a series impedance behind an ideal tap; no
//! magnetizing branch. With taps at 1.0 and the voltage bases matching the
//! nominal ratio, a transformer stamps exactly like a line.

use num_complex::Complex;
use serde::Deserialize;

use crate::linalg::Mat;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    /// Reference bus: voltage fixed at 1.0 pu, angle 0.
    Slack,
    /// Load/injection bus: P and Q specified, V solved.
    Pq,
}

#[derive(Debug, Clone)]
pub struct Bus<F> {
    pub id: usize,
    pub kind: BusKind,
    pub base_kv: F,
    /// Informational per-unit band bounds for monitoring/validation.
    pub v_min: F,
    pub v_max: F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    Line,
    Transformer,
}

#[derive(Debug, Clone)]
pub struct Branch<F> {
    pub from: usize,
    pub to: usize,
    pub kind: BranchKind,
    pub r_ohm_per_km: F,
    pub x_ohm_per_km: F,
    /// Total shunt susceptance, microsiemens per km (split half/half).
    pub b_us_per_km: F,
    pub length_km: F,
    /// Ideal tap on the from side; 1.0 means nominal ratio.
    pub tap_ratio: F,
    /// Thermal rating, informational.
    pub rated_mva: Option<F>,
}

#[derive(Debug, Clone)]
pub struct Load<F> {
    pub bus: usize,
    pub p_mw: F,
    pub q_mvar: F,
    /// Key into the scenario's profile bindings; loads without one are
    /// constant for the whole run.
    pub profile: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    /// Local Volt/VAr droop control of the reactive setpoint.
    VoltVar,
    /// Setpoint driven by the adversary.
    Attacker,
    /// Fixed setpoint, never changed.
    None,
}

/// PV plant behind a smart inverter.
#[derive(Debug, Clone)]
pub struct InverterUnit<F> {
    pub bus: usize,
    pub s_rated_mva: F,
    /// Current active power output, MW. Runtime state; starts at 0.
    pub p_now_mw: F,
    /// Current relative reactive setpoint in [-1, 1]. Runtime state.
    pub q_rel: F,
    pub controller: ControllerKind,
}

impl<F: Real> InverterUnit<F> {
    /// Reactive headroom under the apparent-power capability curve, MVAr.
    pub fn q_avail_mvar(&self) -> F {
        let s2 = self.s_rated_mva * self.s_rated_mva;
        let p2 = self.p_now_mw * self.p_now_mw;
        (s2 - p2).max(F::zero()).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct Grid<F> {
    pub s_base_mva: F,
    /// Sorted by id; matrix/vector positions follow this order.
    pub buses: Vec<Bus<F>>,
    pub branches: Vec<Branch<F>>,
    pub loads: Vec<Load<F>>,
    pub units: Vec<InverterUnit<F>>,
}

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("grid document: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("grid validation: {0}")]
    Validation(String),
}

// ---------------------------------------------------------------------------
// File representation (concrete f64; converted into the generic model).

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileGrid {
    s_base_mva: f64,
    #[serde(default)]
    buses: Vec<FileBus>,
    #[serde(default)]
    branches: Vec<FileBranch>,
    #[serde(default)]
    loads: Vec<FileLoad>,
    #[serde(default)]
    units: Vec<FileUnit>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileBus {
    id: usize,
    #[serde(default = "default_bus_kind")]
    kind: BusKind,
    base_kv: f64,
    #[serde(default = "default_v_min")]
    v_min: f64,
    #[serde(default = "default_v_max")]
    v_max: f64,
}

fn default_bus_kind() -> BusKind {
    BusKind::Pq
}

fn default_v_min() -> f64 {
    0.9
}

fn default_v_max() -> f64 {
    1.1
}

fn default_tap() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileBranch {
    from: usize,
    to: usize,
    #[serde(default = "default_branch_kind")]
    kind: BranchKind,
    r_ohm_per_km: f64,
    x_ohm_per_km: f64,
    #[serde(default)]
    b_us_per_km: f64,
    length_km: f64,
    #[serde(default = "default_tap")]
    tap_ratio: f64,
    #[serde(default)]
    rated_mva: Option<f64>,
}

fn default_branch_kind() -> BranchKind {
    BranchKind::Line
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileLoad {
    bus: usize,
    #[serde(default)]
    p_mw: f64,
    #[serde(default)]
    q_mvar: f64,
    #[serde(default)]
    profile: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileUnit {
    bus: usize,
    s_rated_mva: f64,
    #[serde(default)]
    p_now_mw: f64,
    #[serde(default)]
    q_rel: f64,
    controller: ControllerKind,
}

/// Parses and validates a grid document.
pub fn load_grid<F: Real>(document: &str) -> Result<Grid<F>, GridError> {
    let file: FileGrid = toml::from_str(document)?;
    let mut grid = Grid {
        s_base_mva: F::c(file.s_base_mva),
        buses: file
            .buses
            .iter()
            .map(|b| Bus {
                id: b.id,
                kind: b.kind,
                base_kv: F::c(b.base_kv),
                v_min: F::c(b.v_min),
                v_max: F::c(b.v_max),
            })
            .collect(),
        branches: file
            .branches
            .iter()
            .map(|b| Branch {
                from: b.from,
                to: b.to,
                kind: b.kind,
                r_ohm_per_km: F::c(b.r_ohm_per_km),
                x_ohm_per_km: F::c(b.x_ohm_per_km),
                b_us_per_km: F::c(b.b_us_per_km),
                length_km: F::c(b.length_km),
                tap_ratio: F::c(b.tap_ratio),
                rated_mva: b.rated_mva.map(F::c),
            })
            .collect(),
        loads: file
            .loads
            .iter()
            .map(|l| Load {
                bus: l.bus,
                p_mw: F::c(l.p_mw),
                q_mvar: F::c(l.q_mvar),
                profile: l.profile.clone(),
            })
            .collect(),
        units: file
            .units
            .iter()
            .map(|u| InverterUnit {
                bus: u.bus,
                s_rated_mva: F::c(u.s_rated_mva),
                p_now_mw: F::c(u.p_now_mw),
                q_rel: F::c(u.q_rel),
                controller: u.controller,
            })
            .collect(),
    };
    grid.buses.sort_by_key(|b| b.id);
    validate(&grid)?;
    Ok(grid)
}

impl<F: Real> Grid<F> {
    /// Position of a bus id in matrix/vector order.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.binary_search_by_key(&id, |b| b.id).ok()
    }

    pub fn bus_ids(&self) -> Vec<usize> {
        self.buses.iter().map(|b| b.id).collect()
    }

    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated grid has a slack bus")
    }

    pub fn kinds(&self) -> Vec<BusKind> {
        self.buses.iter().map(|b| b.kind).collect()
    }

    /// Bus ids of units driven by the given controller kind, ascending.
    pub fn unit_buses(&self, kind: ControllerKind) -> Vec<usize> {
        let mut ids: Vec<usize> =
            self.units.iter().filter(|u| u.controller == kind).map(|u| u.bus).collect();
        ids.sort_unstable();
        ids
    }
}

fn validate<F: Real>(grid: &Grid<F>) -> Result<(), GridError> {
    let err = |msg: String| Err(GridError::Validation(msg));

    if grid.s_base_mva <= F::zero() {
        return err(format!("s_base_mva must be positive, got {}", grid.s_base_mva));
    }
    if grid.buses.len() < 2 {
        return err(format!("need at least 2 buses, got {}", grid.buses.len()));
    }
    for pair in grid.buses.windows(2) {
        if pair[0].id == pair[1].id {
            return err(format!("duplicate bus id {}", pair[0].id));
        }
    }
    let slack_count = grid.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
    if slack_count != 1 {
        return err(format!("exactly one slack bus required, found {slack_count}"));
    }
    for bus in &grid.buses {
        if bus.base_kv <= F::zero() {
            return err(format!("bus {}: base_kv must be positive", bus.id));
        }
        if !(bus.v_min < F::one() && F::one() < bus.v_max) {
            return err(format!(
                "bus {}: voltage band must straddle 1.0 pu (v_min {} / v_max {})",
                bus.id, bus.v_min, bus.v_max
            ));
        }
    }
    if grid.branches.is_empty() {
        return err("grid has no branches".to_string());
    }
    for (i, br) in grid.branches.iter().enumerate() {
        if br.from == br.to {
            return err(format!("branch {i}: from == to == {}", br.from));
        }
        let (Some(fi), Some(ti)) = (grid.bus_index(br.from), grid.bus_index(br.to)) else {
            return err(format!("branch {i}: endpoint {}-{} references unknown bus", br.from, br.to));
        };
        if br.length_km <= F::zero() {
            return err(format!("branch {i} ({}-{}): length must be positive", br.from, br.to));
        }
        let z2 = br.r_ohm_per_km * br.r_ohm_per_km + br.x_ohm_per_km * br.x_ohm_per_km;
        if z2 <= F::zero() {
            return err(format!("branch {i} ({}-{}): |z| must be positive", br.from, br.to));
        }
        if br.tap_ratio <= F::zero() {
            return err(format!("branch {i} ({}-{}): tap_ratio must be positive", br.from, br.to));
        }
        let same_base = grid.buses[fi].base_kv == grid.buses[ti].base_kv;
        match br.kind {
            BranchKind::Line if !same_base => {
                return err(format!(
                    "branch {i} ({}-{}): line joins different voltage bases; use a transformer",
                    br.from, br.to
                ));
            }
            _ => {}
        }
    }
    for (i, load) in grid.loads.iter().enumerate() {
        if grid.bus_index(load.bus).is_none() {
            return err(format!("load {i} references unknown bus {}", load.bus));
        }
    }
    for (i, unit) in grid.units.iter().enumerate() {
        if grid.bus_index(unit.bus).is_none() {
            return err(format!("unit {i} references unknown bus {}", unit.bus));
        }
        if unit.s_rated_mva <= F::zero() {
            return err(format!("unit {i}: s_rated_mva must be positive"));
        }
        if unit.p_now_mw.abs() > unit.s_rated_mva {
            return err(format!("unit {i}: |p_now| exceeds s_rated"));
        }
        if unit.q_rel.abs() > F::one() {
            return err(format!("unit {i}: q_rel outside [-1, 1]"));
        }
    }

    // Connectivity over the undirected branch graph.
    let n = grid.buses.len();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        let id = grid.buses[i].id;
        for br in &grid.branches {
            let other = if br.from == id {
                Some(br.to)
            } else if br.to == id {
                Some(br.from)
            } else {
                None
            };
            if let Some(other) = other {
                let oi = grid.bus_index(other).expect("endpoints validated above");
                if !seen[oi] {
                    seen[oi] = true;
                    stack.push(oi);
                }
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return err(format!("grid is not connected: bus {} unreachable", grid.buses[i].id));
    }
    Ok(())
}

/// Builds the nodal admittance matrix in per unit, bus positions in id order.
///
/// Diagonals collect the series admittances of incident branches plus the
/// shunt halves; off-diagonals are minus the series admittance between the
/// pair (scaled by the tap for transformers).
pub fn admittance_matrix<F: Real>(grid: &Grid<F>) -> Mat<Complex<F>> {
    let n = grid.buses.len();
    let mut y = Mat::<Complex<F>>::zeros(n, n);
    let mega = F::c(1e-6);
    for br in &grid.branches {
        let fi = grid.bus_index(br.from).expect("validated");
        let ti = grid.bus_index(br.to).expect("validated");
        // Impedance referred to the to-side base (both sides equal for lines).
        let base_kv = grid.buses[ti].base_kv;
        let z_base = base_kv * base_kv / grid.s_base_mva;
        let z_ohm = Complex::new(br.r_ohm_per_km * br.length_km, br.x_ohm_per_km * br.length_km);
        let y_series = Complex::new(z_base, F::zero()) / z_ohm;
        // Total shunt susceptance in pu: b[S] * z_base, half at each end.
        let b_shunt = br.b_us_per_km * br.length_km * mega * z_base;
        let half_shunt = Complex::new(F::zero(), b_shunt / F::c(2.0));
        let tap = br.tap_ratio;
        let t2 = tap * tap;

        let y_tt = y_series + half_shunt;
        let y_ff = Complex::new(y_tt.re / t2, y_tt.im / t2);
        let y_ft = -y_series / Complex::new(tap, F::zero());
        let y_tf = y_ft;

        y[(fi, fi)] += y_ff;
        y[(ti, ti)] += y_tt;
        y[(fi, ti)] += y_ft;
        y[(ti, fi)] += y_tf;
    }
    y
}

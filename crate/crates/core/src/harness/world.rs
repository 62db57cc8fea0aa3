//! Stateful simulation world: weather and loads in, control loop and power
//! flow inside, voltage trajectories and rewards out.
//!
//! One step advances simulated time by `step_seconds` through five phases:
//! sample the time series at the new instant, update the Volt/VAr
//! controllers against the voltages of the previous solve (the Eq.-1 timing
//! convention), apply the attacker's setpoints, assemble net bus
//! injections, and solve the power flow. A non-converged solve is recorded,
//! not raised; whether it ends the run is the caller's policy.

use chrono::{DateTime, Duration, Utc};
use num_complex::Complex;

use super::config::{ProfileChannel, ScenarioConfig};
use super::HarnessError;
use crate::agents::{filter_observation, objective};
use crate::grid::{load_grid, ControllerKind, Grid};
use crate::linalg::Mat;
use crate::powerflow::{solve, Injection, SolveOptions};
use crate::timeseries::{
    ingest, pv_power, synth_weather, TimeSeries, CHANNEL_IRRADIANCE, CHANNEL_LOAD_P,
    CHANNEL_LOAD_Q,
};
use crate::voltvar::{project, ControllerState};

/// Immutable inputs of a scenario: the grid and every bound time series.
/// Loaded once; `World`s borrow it.
pub struct ScenarioData {
    pub grid: Grid<f64>,
    pub weather: TimeSeries<f64>,
    /// Parallel to `grid.loads`: the (p, q) series of profile-keyed loads.
    pub load_series: Vec<Option<(TimeSeries<f64>, TimeSeries<f64>)>>,
}

impl ScenarioData {
    pub fn load(cfg: &ScenarioConfig) -> Result<Self, HarnessError> {
        let doc = std::fs::read_to_string(&cfg.grid)
            .map_err(|e| HarnessError::file(&cfg.grid, e))?;
        let mut grid: Grid<f64> = load_grid(&doc)?;
        if !cfg.consumers {
            grid.loads.retain(|l| l.profile.is_none());
        }

        let weather = match &cfg.weather.file {
            Some(path) => {
                let doc =
                    std::fs::read_to_string(path).map_err(|e| HarnessError::file(path, e))?;
                let series = ingest(&doc)?;
                if series.channel != CHANNEL_IRRADIANCE {
                    return Err(HarnessError::Data(format!(
                        "weather file {} carries channel '{}', expected '{CHANNEL_IRRADIANCE}'",
                        path.display(),
                        series.channel
                    )));
                }
                series
            }
            None => synth_weather(cfg.weather.day_type, cfg.seeds.run),
        };

        let mut load_series = Vec::with_capacity(grid.loads.len());
        for load in &grid.loads {
            match &load.profile {
                None => load_series.push(None),
                Some(key) => {
                    let p = Self::bound_series(cfg, key, ProfileChannel::LoadP)?;
                    let q = Self::bound_series(cfg, key, ProfileChannel::LoadQ)?;
                    load_series.push(Some((p, q)));
                }
            }
        }
        Ok(Self { grid, weather, load_series })
    }

    fn bound_series(
        cfg: &ScenarioConfig,
        key: &str,
        channel: ProfileChannel,
    ) -> Result<TimeSeries<f64>, HarnessError> {
        let binding = cfg
            .profiles
            .iter()
            .find(|p| p.key == key && p.channel == channel)
            .ok_or_else(|| {
                HarnessError::Data(format!("no {channel:?} binding for profile '{key}'"))
            })?;
        let doc = std::fs::read_to_string(&binding.file)
            .map_err(|e| HarnessError::file(&binding.file, e))?;
        let series = ingest(&doc)?;
        let expected = match channel {
            ProfileChannel::Irradiance => CHANNEL_IRRADIANCE,
            ProfileChannel::LoadP => CHANNEL_LOAD_P,
            ProfileChannel::LoadQ => CHANNEL_LOAD_Q,
        };
        if series.channel != expected {
            return Err(HarnessError::Data(format!(
                "profile '{key}' file {} carries channel '{}', expected '{expected}'",
                binding.file.display(),
                series.channel
            )));
        }
        Ok(series)
    }
}

/// Everything observable about one executed simulation step. For a
/// non-converged step, `v_mag` holds the solver's last iterate (useful to
/// see the blow-up); the world keeps controlling from the last converged
/// voltages.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: u64,
    pub timestamp: DateTime<Utc>,
    pub converged: bool,
    /// Any bus outside the configured band (false on non-converged steps).
    pub violation: bool,
    /// Objective of the filtered voltages; the variant's supremum on
    /// divergence (maximal disruption).
    pub objective: f64,
    /// Attacker action as applied (clamped), ascending attacker-bus order.
    pub action: Vec<f64>,
    pub v_mag: Vec<f64>,
    /// Bus voltage angles, radians (energy bookkeeping; not traced).
    pub v_ang: Vec<f64>,
    /// Relative setpoints of every unit, `Grid::units` order.
    pub q_rel: Vec<f64>,
    /// Active output of every unit, MW.
    pub p_now: Vec<f64>,
}

pub struct World<'a> {
    data: &'a ScenarioData,
    y: Mat<Complex<f64>>,
    kinds: Vec<crate::grid::BusKind>,
    bus_ids: Vec<usize>,
    options: SolveOptions<f64>,
    step_seconds: i64,
    pv_active_fraction: f64,
    /// Irradiance frozen at the start instant, if the config says so.
    constant_irradiance: Option<f64>,
    objective_params: crate::agents::ObjectiveParams<f64>,
    sensor_buses: Vec<usize>,
    band: [f64; 2],
    observe_headroom: bool,

    controllers: Vec<ControllerState<f64>>,
    /// Unit indices driven by the attacker, ascending bus order.
    attacker_units: Vec<usize>,
    unit_q_rel: Vec<f64>,
    unit_p_now: Vec<f64>,

    time: DateTime<Utc>,
    steps_done: u64,
    v_mag: Vec<f64>,
    v_ang: Vec<f64>,
    initial_converged: bool,
}

impl<'a> World<'a> {
    /// Builds the world at the configured start and solves the initial
    /// operating point (all relative setpoints zero).
    pub fn new(data: &'a ScenarioData, cfg: &ScenarioConfig) -> Self {
        Self::with_start(data, cfg, cfg.start)
    }

    /// Same, at an explicit start instant (episode offsets).
    pub fn with_start(
        data: &'a ScenarioData,
        cfg: &ScenarioConfig,
        start: DateTime<Utc>,
    ) -> Self {
        let grid = &data.grid;
        let y = crate::grid::admittance_matrix(grid);
        let constant_irradiance =
            cfg.weather.constant.then(|| data.weather.sample_cyclic(start));
        let mut controllers = Vec::new();
        let mut attacker_units = Vec::new();
        for (i, u) in grid.units.iter().enumerate() {
            match u.controller {
                ControllerKind::VoltVar => {
                    controllers.push(ControllerState::new(i, cfg.controller_step_size))
                }
                ControllerKind::Attacker => attacker_units.push(i),
                ControllerKind::None => {}
            }
        }
        attacker_units.sort_by_key(|&i| grid.units[i].bus);

        let mut world = Self {
            data,
            y,
            kinds: grid.kinds(),
            bus_ids: grid.bus_ids(),
            options: SolveOptions::default(),
            step_seconds: cfg.step_seconds as i64,
            pv_active_fraction: cfg.weather.pv_active_fraction,
            constant_irradiance,
            objective_params: cfg.objective,
            sensor_buses: cfg.sensor_buses.clone(),
            band: cfg.voltage_band,
            observe_headroom: cfg.training.observe_headroom,
            controllers,
            attacker_units,
            unit_q_rel: vec![0.0; grid.units.len()],
            unit_p_now: vec![0.0; grid.units.len()],
            time: start,
            steps_done: 0,
            v_mag: vec![1.0; grid.buses.len()],
            v_ang: vec![0.0; grid.buses.len()],
            initial_converged: false,
        };
        world.refresh_pv(start);
        let inj = world.assemble_injections(start);
        let sol = solve(&world.y, &inj, &world.kinds, &world.options);
        world.initial_converged = sol.converged;
        if sol.converged {
            world.v_mag = sol.v_mag;
            world.v_ang = sol.v_ang;
        }
        world
    }

    pub fn initial_converged(&self) -> bool {
        self.initial_converged
    }

    pub fn time(&self) -> DateTime<Utc> {
        self.time
    }

    pub fn steps_done(&self) -> u64 {
        self.steps_done
    }

    /// Last converged per-bus voltage magnitudes, `Grid::buses` order.
    pub fn voltages(&self) -> &[f64] {
        &self.v_mag
    }

    pub fn attacker_unit_count(&self) -> usize {
        self.attacker_units.len()
    }

    /// Current relative setpoints of the benign controllers, in
    /// `controllers` order (diagnostics and tests).
    pub fn controller_setpoints(&self) -> Vec<f64> {
        self.controllers.iter().map(|c| c.q_rel).collect()
    }

    fn irradiance(&self, t: DateTime<Utc>) -> f64 {
        self.constant_irradiance.unwrap_or_else(|| self.data.weather.sample_cyclic(t))
    }

    fn refresh_pv(&mut self, t: DateTime<Utc>) {
        let g = self.irradiance(t);
        for (i, u) in self.data.grid.units.iter().enumerate() {
            self.unit_p_now[i] = self.pv_active_fraction * pv_power(g, u.s_rated_mva);
        }
    }

    fn q_avail(&self, unit: usize) -> f64 {
        let s = self.data.grid.units[unit].s_rated_mva;
        let p = self.unit_p_now[unit];
        (s * s - p * p).max(0.0).sqrt()
    }

    fn load_at(&self, load_idx: usize, t: DateTime<Utc>) -> (f64, f64) {
        let load = &self.data.grid.loads[load_idx];
        match &self.data.load_series[load_idx] {
            None => (load.p_mw, load.q_mvar),
            Some((p, q)) => (p.sample_cyclic(t), q.sample_cyclic(t)),
        }
    }

    /// Net per-unit bus injections at instant `t` from the current unit
    /// state (generation positive, load negative).
    fn assemble_injections(&self, t: DateTime<Utc>) -> Injection<f64> {
        let grid = &self.data.grid;
        let s_base = grid.s_base_mva;
        let mut inj = Injection::zeros(grid.buses.len());
        for (li, load) in grid.loads.iter().enumerate() {
            let (p, q) = self.load_at(li, t);
            let b = grid.bus_index(load.bus).expect("validated load bus");
            inj.p[b] -= p / s_base;
            inj.q[b] -= q / s_base;
        }
        for (ui, unit) in grid.units.iter().enumerate() {
            let b = grid.bus_index(unit.bus).expect("validated unit bus");
            inj.p[b] += self.unit_p_now[ui] / s_base;
            inj.q[b] += self.unit_q_rel[ui] * self.q_avail(ui) / s_base;
        }
        inj
    }

    /// Advances one step. `attacker_action` has one component per attacker
    /// unit (ascending bus order); components are projected into [-1, 1].
    pub fn step(&mut self, attacker_action: &[f64]) -> StepRecord {
        assert_eq!(
            attacker_action.len(),
            self.attacker_units.len(),
            "action width mismatch"
        );
        let t_next = self.time + Duration::seconds(self.step_seconds);

        // Phase 1: exogenous drivers at the new instant.
        self.refresh_pv(t_next);

        // Phase 2: Volt/VAr controllers react to the previous voltages.
        for c in self.controllers.iter_mut() {
            let bus = self.data.grid.units[c.unit].bus;
            let pos = self.data.grid.bus_index(bus).expect("validated unit bus");
            *c = c.voltvar_step(self.v_mag[pos]);
            self.unit_q_rel[c.unit] = c.q_rel;
        }

        // Phase 3: attacker setpoints.
        let mut action = Vec::with_capacity(attacker_action.len());
        for (&ui, &a) in self.attacker_units.iter().zip(attacker_action) {
            let a = project(a);
            self.unit_q_rel[ui] = a;
            action.push(a);
        }

        // Phase 4: power flow.
        let inj = self.assemble_injections(t_next);
        let sol = solve(&self.y, &inj, &self.kinds, &self.options);

        // Phase 5: bookkeeping and reward.
        let (violation, objective_value) = if sol.converged {
            self.v_mag = sol.v_mag.clone();
            self.v_ang = sol.v_ang.clone();
            let violation = self
                .v_mag
                .iter()
                .any(|&v| v < self.band[0] || v > self.band[1]);
            let obs = filter_observation(&self.v_mag, &self.bus_ids, &self.sensor_buses)
                .expect("sensors validated against grid");
            let value = objective(&obs, &self.objective_params)
                .expect("sensor set is non-empty");
            (violation, value)
        } else {
            (false, self.objective_params.supremum())
        };

        self.time = t_next;
        let record = StepRecord {
            step: self.steps_done,
            timestamp: t_next,
            converged: sol.converged,
            violation,
            objective: objective_value,
            action,
            v_mag: sol.v_mag,
            v_ang: sol.v_ang,
            q_rel: self.unit_q_rel.clone(),
            p_now: self.unit_p_now.clone(),
        };
        self.steps_done += 1;
        record
    }

    /// The attacker's view: voltages at its sensor buses, its own current
    /// relative setpoints, and (if enabled) its units' normalized headroom.
    pub fn attacker_observation(&self) -> Vec<f64> {
        let obs = filter_observation(&self.v_mag, &self.bus_ids, &self.sensor_buses)
            .expect("sensors validated against grid");
        let mut x = obs.v;
        for &ui in &self.attacker_units {
            x.push(self.unit_q_rel[ui]);
        }
        if self.observe_headroom {
            for &ui in &self.attacker_units {
                x.push(self.q_avail(ui) / self.data.grid.units[ui].s_rated_mva);
            }
        }
        x
    }

    pub fn observation_dim(&self) -> usize {
        self.sensor_buses.len()
            + self.attacker_units.len()
            + if self.observe_headroom { self.attacker_units.len() } else { 0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;
    use std::path::Path;

    // Two PV buses behind one feeder: bus 1 volt/var, bus 2 attacker.
    const TINY_GRID: &str = r#"
s_base_mva = 1.0

[[buses]]
id = 0
kind = "slack"
base_kv = 20.0

[[buses]]
id = 1
base_kv = 20.0

[[buses]]
id = 2
base_kv = 20.0

[[branches]]
from = 0
to = 1
r_ohm_per_km = 0.5
x_ohm_per_km = 4.0
length_km = 2.0

[[branches]]
from = 1
to = 2
r_ohm_per_km = 0.5
x_ohm_per_km = 4.0
length_km = 1.0

[[loads]]
bus = 1
p_mw = 0.5
q_mvar = 0.2

[[loads]]
bus = 2
p_mw = 0.3
q_mvar = 0.1

[[units]]
bus = 1
s_rated_mva = 1.0
controller = "volt_var"

[[units]]
bus = 2
s_rated_mva = 1.0
controller = "attacker"
"#;

    const TINY_CFG: &str = r#"
scenario = "s1_static_attack"
grid = "unused.toml"
start = "2021-01-01T12:00:00Z"
attacker_buses = [2]
sensor_buses = [2]

[weather]
day_type = "clear"
constant = true
"#;

    fn tiny() -> (ScenarioData, ScenarioConfig) {
        let grid = load_grid(TINY_GRID).unwrap();
        let mut cfg = parse_config(TINY_CFG, Path::new(".")).unwrap();
        cfg.validate_with_grid(&grid).unwrap();
        let weather = synth_weather(cfg.weather.day_type, cfg.seeds.run);
        let load_series = vec![None; grid.loads.len()];
        (ScenarioData { grid, weather, load_series }, cfg)
    }

    #[test]
    fn initial_solve_converges_with_zero_setpoints() {
        let (data, cfg) = tiny();
        let world = World::new(&data, &cfg);
        assert!(world.initial_converged());
        assert_eq!(world.voltages().len(), 3);
        assert_eq!(world.controller_setpoints(), vec![0.0]);
        // Constant clear-sky noon: p_now = 0.9 * 1 MVA * 1.0.
        assert!((world.unit_p_now[0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn observation_is_sensors_then_own_setpoints() {
        let (data, cfg) = tiny();
        let mut world = World::new(&data, &cfg);
        assert_eq!(world.observation_dim(), 2);
        let obs = world.attacker_observation();
        assert_eq!(obs.len(), 2);
        assert_eq!(obs[1], 0.0);
        world.step(&[0.7]);
        let obs = world.attacker_observation();
        assert_eq!(obs[1], 0.7);
        let pos = data.grid.bus_index(2).unwrap();
        assert_eq!(obs[0], world.voltages()[pos]);
    }

    #[test]
    fn actions_are_projected_and_recorded() {
        let (data, cfg) = tiny();
        let mut world = World::new(&data, &cfg);
        let rec = world.step(&[4.2]);
        assert_eq!(rec.action, vec![1.0]);
        assert_eq!(rec.step, 0);
        assert!(rec.converged);
        assert_eq!(rec.q_rel[1], 1.0);
        let rec = world.step(&[-4.2]);
        assert_eq!(rec.step, 1);
        assert_eq!(rec.action, vec![-1.0]);
    }

    #[test]
    fn controllers_counteract_attacker_overvoltage() {
        let (data, cfg) = tiny();
        let mut world = World::new(&data, &cfg);
        // Full injection at bus 2 raises voltages; the bus-1 controller
        // must answer with absorption (negative setpoint).
        world.step(&[1.0]);
        let rec = world.step(&[1.0]);
        assert!(rec.q_rel[0] < 0.0, "controller setpoint {}", rec.q_rel[0]);
    }

    #[test]
    fn timestamps_advance_by_step_seconds() {
        let (data, cfg) = tiny();
        let mut world = World::new(&data, &cfg);
        let t0 = world.time();
        let rec = world.step(&[0.0]);
        assert_eq!(rec.timestamp, t0 + Duration::seconds(900));
        assert_eq!(world.time(), rec.timestamp);
    }

    #[test]
    fn constant_weather_pins_pv_output() {
        let (data, cfg) = tiny();
        let mut world = World::new(&data, &cfg);
        // 40 steps of 15 min crosses sunset; constant mode must not care.
        for _ in 0..40 {
            let rec = world.step(&[0.0]);
            assert!((rec.p_now[0] - 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn profile_loads_track_their_series() {
        let (mut data, cfg) = tiny();
        // Bind a synthetic ramp to the bus-1 load.
        let mk = |channel: &str, scale: f64| {
            let doc = format!(
                "{channel},MW\n2021-01-01T00:00:00Z,{}\n2021-01-02T00:00:00Z,{}\n",
                0.0,
                24.0 * scale
            );
            ingest::<f64>(&doc).unwrap()
        };
        data.grid.loads[0].profile = Some("ramp".into());
        data.load_series[0] = Some((mk(CHANNEL_LOAD_P, 1.0), mk(CHANNEL_LOAD_Q, 0.5)));
        let world = World::new(&data, &cfg);
        // At 12:00 the ramp gives p = 12, q = 6.
        let (p, q) = world.load_at(0, cfg.start);
        assert!((p - 12.0).abs() < 1e-9 && (q - 6.0).abs() < 1e-9, "{p}, {q}");
        // The unkeyed load is untouched.
        let (p, q) = world.load_at(1, cfg.start);
        assert_eq!((p, q), (0.3, 0.1));
    }
}

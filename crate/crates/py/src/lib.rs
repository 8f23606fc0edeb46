//! Python bindings: simulator runs, attack scenarios and closed-form checks.
//!
//! Structured results come back as plain dicts and lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;
use unity_core::attacks::{
    double_spend_feasible, private_double_spend_trials, run_future_mining_game, run_long_range_attack,
    run_selfish_mining, run_split_stake_nas, AttackSetup, FutureGameConfig, LraConfig, RaceConfig, SelfishConfig,
    SplitStakeConfig,
};
use unity_core::sim::{self, Class, SimConfig, SimReport};
use unity_core::slashing;

fn value_error(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Round-trips through JSON so nested structures become dicts and lists.
fn to_py<T: Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(value_error)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Simulation parameters. Field names match the config file keys.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: SimConfig,
}

#[pymethods]
impl PyConfig {
    /// The month-long ten-staker, ten-miner baseline.
    #[staticmethod]
    fn baseline() -> Self {
        PyConfig {
            inner: SimConfig::baseline(),
        }
    }

    /// Parses `key = value` config text.
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        SimConfig::parse(text).map(|inner| PyConfig { inner }).map_err(value_error)
    }

    fn to_text(&self) -> String {
        self.inner.to_config_string()
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration
    }

    #[setter]
    fn set_duration(&mut self, v: f64) {
        self.inner.duration = v;
    }

    #[getter]
    fn rng_seed(&self) -> u64 {
        self.inner.rng_seed
    }

    #[setter]
    fn set_rng_seed(&mut self, v: u64) {
        self.inner.rng_seed = v;
    }

    #[getter]
    fn t(&self) -> f64 {
        self.inner.t
    }

    #[getter]
    fn latency(&self) -> String {
        self.inner.latency.to_string()
    }

    /// `perfect`, `fixed:SECS` or `uniform:LO:HI`.
    #[setter]
    fn set_latency(&mut self, v: &str) -> PyResult<()> {
        self.inner.latency = v.parse().map_err(PyValueError::new_err)?;
        Ok(())
    }

    #[getter]
    fn slashing(&self) -> String {
        self.inner.slashing.to_string()
    }

    /// `off`, `evidence` or `dunkle:N`.
    #[setter]
    fn set_slashing(&mut self, v: &str) -> PyResult<()> {
        self.inner.slashing = v.parse().map_err(PyValueError::new_err)?;
        Ok(())
    }

    #[getter]
    fn warmup_blocks(&self) -> u64 {
        self.inner.warmup_blocks
    }

    #[setter]
    fn set_warmup_blocks(&mut self, v: u64) {
        self.inner.warmup_blocks = v;
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(t={}, duration={}, rng_seed={}, latency={})",
            self.inner.t, self.inner.duration, self.inner.rng_seed, self.inner.latency
        )
    }
}

#[pyclass(name = "Report", frozen)]
struct PyReport {
    inner: SimReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn total_blocks(&self) -> u64 {
        self.inner.total_blocks
    }

    #[getter]
    fn pos_blocks(&self) -> u64 {
        self.inner.pos_blocks
    }

    #[getter]
    fn pow_blocks(&self) -> u64 {
        self.inner.pow_blocks
    }

    #[getter]
    fn orphan_proxy(&self) -> f64 {
        sim::orphan_proxy(&self.inner)
    }

    /// Post-warm-up gaps for `all`, `pos` or `pow`.
    fn interarrivals(&self, class: &str) -> PyResult<Vec<f64>> {
        let c = match class.to_ascii_lowercase().as_str() {
            "all" => Class::All,
            "pos" => Class::Pos,
            "pow" => Class::Pow,
            other => return Err(PyValueError::new_err(format!("unknown class `{other}`; expected all, pos or pow"))),
        };
        Ok(self.inner.interarrivals(c).to_vec())
    }

    /// The report.json content as a dict.
    fn summary(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.summary())
    }

    /// The report.json bytes.
    fn report_json(&self) -> PyResult<String> {
        let mut out = Vec::new();
        self.inner.write_report_json(&mut out).map_err(value_error)?;
        String::from_utf8(out).map_err(value_error)
    }

    fn evidence(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.evidence)
    }
}

/// Runs one simulation. The GIL is released while it runs.
#[pyfunction]
fn simulate(py: Python<'_>, config: PyConfig) -> PyResult<PyReport> {
    let cfg = config.inner;
    py.detach(|| sim::run(&cfg))
        .map(|inner| PyReport { inner })
        .map_err(value_error)
}

/// `(lhs, feasible)` of the private double-spend inequality.
#[pyfunction]
#[pyo3(signature = (a, b, c, d, td_wc, td_sc, horizon))]
fn double_spend_lhs(a: f64, b: f64, c: f64, d: f64, td_wc: f64, td_sc: f64, horizon: f64) -> (f64, bool) {
    double_spend_feasible(&AttackSetup {
        a,
        b,
        c,
        d,
        td_wc,
        td_sc,
        horizon,
    })
}

/// Monte Carlo private double-spend races at frozen equilibrium difficulty.
#[pyfunction]
#[pyo3(signature = (a, b, c, d, td_wc, td_sc, horizon, trials=200, seed=0, t=10.0))]
#[allow(clippy::too_many_arguments)]
fn double_spend(
    py: Python<'_>,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    td_wc: f64,
    td_sc: f64,
    horizon: f64,
    trials: u64,
    seed: u64,
    t: f64,
) -> PyResult<Py<PyAny>> {
    let setup = AttackSetup {
        a,
        b,
        c,
        d,
        td_wc,
        td_sc,
        horizon,
    };
    let s = py.detach(|| private_double_spend_trials(&setup, &RaceConfig::frozen_equilibrium(&setup, t), trials, seed));
    to_py(
        py,
        &serde_json::json!({
            "lhs": s.lhs,
            "feasible": s.feasible,
            "trials": s.trials,
            "wins": s.wins,
            "win_rate": s.win_rate,
        }),
    )
}

/// PoS-only rewrite of a finished honest run.
#[pyfunction]
#[pyo3(signature = (config, depth, attacker_share=1.0))]
fn long_range(py: Python<'_>, config: PyConfig, depth: u64, attacker_share: f64) -> PyResult<Py<PyAny>> {
    let cfg = LraConfig::new(config.inner, depth, attacker_share);
    let o = py.detach(|| run_long_range_attack(&cfg)).map_err(value_error)?;
    to_py(py, &o)
}

#[pyfunction]
#[pyo3(signature = (attacker_share, trials=100, horizon=200_000.0, seed=0))]
fn selfish_mining(py: Python<'_>, attacker_share: f64, trials: u64, horizon: f64, seed: u64) -> PyResult<Py<PyAny>> {
    let cfg = SelfishConfig {
        trials,
        horizon,
        base_seed: seed,
        ..SelfishConfig::new(attacker_share)
    };
    let o = py.detach(|| run_selfish_mining(&cfg)).map_err(value_error)?;
    to_py(py, &o)
}

#[pyfunction]
#[pyo3(signature = (stake=100, splits=10, rounds=100_000, seed=0))]
fn split_stake(py: Python<'_>, stake: u64, splits: u64, rounds: u64, seed: u64) -> PyResult<Py<PyAny>> {
    let cfg = SplitStakeConfig {
        seed,
        ..SplitStakeConfig::even(stake, splits, rounds).map_err(value_error)?
    };
    let r = py.detach(|| run_split_stake_nas(&cfg)).map_err(value_error)?;
    let mut v = serde_json::to_value(&r).map_err(value_error)?;
    v["indistinguishable"] = r.indistinguishable().into();
    to_py(py, &v)
}

#[pyfunction]
#[pyo3(signature = (seed=0, bob_present=true))]
fn future_mining_game(py: Python<'_>, seed: u64, bob_present: bool) -> PyResult<Py<PyAny>> {
    let cfg = FutureGameConfig {
        seed,
        bob_present,
        ..FutureGameConfig::default()
    };
    let t = run_future_mining_game(&cfg).map_err(value_error)?;
    let mut v = serde_json::to_value(&t).map_err(value_error)?;
    v["matches_expected_accounting"] = t.matches_expected_accounting().into();
    to_py(py, &v)
}

/// Largest penalty multiple an honest staker with orphan probability `a`
/// can bear.
#[pyfunction]
fn dunkle_n_bound(a: f64) -> PyResult<f64> {
    slashing::dunkle_n_bound(a).map_err(value_error)
}

#[pymodule]
fn unity_consensus(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(double_spend_lhs, m)?)?;
    m.add_function(wrap_pyfunction!(double_spend, m)?)?;
    m.add_function(wrap_pyfunction!(long_range, m)?)?;
    m.add_function(wrap_pyfunction!(selfish_mining, m)?)?;
    m.add_function(wrap_pyfunction!(split_stake, m)?)?;
    m.add_function(wrap_pyfunction!(future_mining_game, m)?)?;
    m.add_function(wrap_pyfunction!(dunkle_n_bound, m)?)?;
    Ok(())
}

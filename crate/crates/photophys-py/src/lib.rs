//! Python bindings: emitter models, stream simulation, correlation and the
//! fit families, with fit results handed over as plain dictionaries.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use photophys::correlator::{self, G2Series, NormalizationMode};
use photophys::fit::{self, FitResult, PowerEntry, PowerSeries, Spectrum};
use photophys::io;
use photophys::sim::{self, Channel, SimConfig};
use photophys::{EmitterModel, Error};

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Io(inner) => PyIOError::new_err(inner.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    Ok(match value {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (key, item) in map {
                dict.set_item(key, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn fit_to_py(py: Python<'_>, result: &FitResult) -> PyResult<Py<PyAny>> {
    let value = serde_json::to_value(result)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(json_to_py(py, &value)?.unbind())
}

fn parse_channel(name: &str) -> PyResult<Channel> {
    match name {
        "det0" => Ok(Channel::Det0),
        "det1" => Ok(Channel::Det1),
        "sync" => Ok(Channel::Sync),
        other => Err(PyValueError::new_err(format!(
            "unknown channel {other:?}; expected det0, det1 or sync"
        ))),
    }
}

/// Power-independent three-level emitter model.
#[pyclass(name = "EmitterModel", frozen, from_py_object)]
#[derive(Clone)]
struct PyEmitterModel {
    inner: EmitterModel,
}

#[pymethods]
impl PyEmitterModel {
    #[new]
    fn new(
        pump_efficiency: f64,
        k21: f64,
        k23: f64,
        deshelve_high: f64,
        deshelve_sat: f64,
        deshelve_low: f64,
    ) -> PyResult<Self> {
        EmitterModel::new(
            pump_efficiency,
            k21,
            k23,
            deshelve_high,
            deshelve_sat,
            deshelve_low,
        )
        .map(|inner| Self { inner })
        .map_err(to_py_err)
    }

    #[staticmethod]
    fn gev1() -> Self {
        Self {
            inner: photophys::presets::gev1(),
        }
    }

    #[staticmethod]
    fn gev2() -> Self {
        Self {
            inner: photophys::presets::gev2(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: EmitterModel =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(to_py_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn pump_efficiency(&self) -> f64 {
        self.inner.pump_efficiency
    }

    #[getter]
    fn k21(&self) -> f64 {
        self.inner.k21
    }

    #[getter]
    fn k23(&self) -> f64 {
        self.inner.k23
    }

    #[getter]
    fn deshelve_high(&self) -> f64 {
        self.inner.deshelve_high
    }

    #[getter]
    fn deshelve_sat(&self) -> f64 {
        self.inner.deshelve_sat
    }

    #[getter]
    fn deshelve_low(&self) -> f64 {
        self.inner.deshelve_low
    }

    /// Excited-state lifetime 1/(k21 + k23) in ns.
    fn zero_power_lifetime(&self) -> f64 {
        self.inner.zero_power_lifetime()
    }

    /// (k12, k21, k23, k31) in GHz at the given power in mW.
    fn rates_at_power(&self, power_mw: f64) -> PyResult<(f64, f64, f64, f64)> {
        let r = self.inner.rates_at_power(power_mw).map_err(to_py_err)?;
        Ok((r.k12, r.k21, r.k23, r.k31))
    }

    /// {"a", "tau1_ns", "tau2_ns"} of the analytic g2 at the given power.
    fn g2_parameters<'py>(&self, py: Python<'py>, power_mw: f64) -> PyResult<Bound<'py, PyDict>> {
        let params = self
            .inner
            .rates_at_power(power_mw)
            .and_then(|r| r.g2_parameters())
            .map_err(to_py_err)?;
        let dict = PyDict::new(py);
        dict.set_item("a", params.a)?;
        dict.set_item("tau1_ns", params.tau1)?;
        dict.set_item("tau2_ns", params.tau2)?;
        Ok(dict)
    }

    /// {"n1", "n2", "n3", "emission_rate_ghz"} at the given power.
    fn steady_state<'py>(&self, py: Python<'py>, power_mw: f64) -> PyResult<Bound<'py, PyDict>> {
        let ss = self
            .inner
            .rates_at_power(power_mw)
            .and_then(|r| r.steady_state())
            .map_err(to_py_err)?;
        let dict = PyDict::new(py);
        dict.set_item("n1", ss.n1)?;
        dict.set_item("n2", ss.n2)?;
        dict.set_item("n3", ss.n3)?;
        dict.set_item("emission_rate_ghz", ss.emission_rate)?;
        Ok(dict)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Time-ordered detection events from a simulation or a file.
#[pyclass(name = "TimeTagStream", frozen)]
struct PyTimeTagStream {
    inner: sim::TimeTagStream,
}

#[pymethods]
impl PyTimeTagStream {
    fn __len__(&self) -> usize {
        self.inner.events.len()
    }

    fn duration_ns(&self) -> f64 {
        self.inner.duration_ns()
    }

    /// {"det0": n, "det1": n, "sync": n} event counts.
    fn channel_counts<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let dict = PyDict::new(py);
        for (name, channel) in [
            ("det0", Channel::Det0),
            ("det1", Channel::Det1),
            ("sync", Channel::Sync),
        ] {
            dict.set_item(name, self.inner.channel_count(channel))?;
        }
        Ok(dict)
    }

    /// Integer timestamps in ps for one channel ("det0", "det1", "sync").
    fn timestamps_ps(&self, channel: &str) -> PyResult<Vec<u64>> {
        let channel = parse_channel(channel)?;
        Ok(self
            .inner
            .events
            .iter()
            .filter(|t| t.channel == channel)
            .map(|t| t.timestamp_ps)
            .collect())
    }

    fn save(&self, path: &str) -> PyResult<()> {
        io::write_timetags_path(path, &self.inner).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        io::read_timetags_path(path)
            .map(|inner| Self { inner })
            .map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "TimeTagStream({} events over {:.3e} ns)",
            self.inner.events.len(),
            self.inner.duration_ns()
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn build_config(
    model: &PyEmitterModel,
    power_mw: f64,
    duration_s: f64,
    efficiency: f64,
    background_mhz: f64,
    splitter: f64,
    seed: u64,
    pulsed: Option<(f64, f64)>,
) -> SimConfig {
    let mut config = match pulsed {
        None => SimConfig::cw(model.inner, power_mw, duration_s * 1e9),
        Some((period_ns, pulse_probability)) => SimConfig::pulsed(
            model.inner,
            power_mw,
            duration_s * 1e9,
            period_ns,
            pulse_probability,
        ),
    };
    config.detection_efficiency = efficiency;
    config.background_rate_ghz = background_mhz * 1e-3;
    config.splitter_ratio = splitter;
    config.rng_seed = seed;
    config
}

/// Simulates a continuous-wave photon stream.
#[pyfunction]
#[pyo3(signature = (model, power_mw, duration_s, *, efficiency=1.0, background_mhz=0.0, splitter=0.5, seed=0))]
#[allow(clippy::too_many_arguments)]
fn simulate_cw(
    model: &PyEmitterModel,
    power_mw: f64,
    duration_s: f64,
    efficiency: f64,
    background_mhz: f64,
    splitter: f64,
    seed: u64,
) -> PyResult<PyTimeTagStream> {
    let config = build_config(
        model,
        power_mw,
        duration_s,
        efficiency,
        background_mhz,
        splitter,
        seed,
        None,
    );
    sim::simulate_cw(&config)
        .map(|inner| PyTimeTagStream { inner })
        .map_err(to_py_err)
}

/// Simulates a pulsed-excitation photon stream with sync markers.
#[pyfunction]
#[pyo3(signature = (model, power_mw, duration_s, period_ns, pulse_probability, *, efficiency=1.0, background_mhz=0.0, splitter=0.5, seed=0))]
#[allow(clippy::too_many_arguments)]
fn simulate_pulsed(
    model: &PyEmitterModel,
    power_mw: f64,
    duration_s: f64,
    period_ns: f64,
    pulse_probability: f64,
    efficiency: f64,
    background_mhz: f64,
    splitter: f64,
    seed: u64,
) -> PyResult<PyTimeTagStream> {
    let config = build_config(
        model,
        power_mw,
        duration_s,
        efficiency,
        background_mhz,
        splitter,
        seed,
        Some((period_ns, pulse_probability)),
    );
    sim::simulate_pulsed(&config)
        .map(|inner| PyTimeTagStream { inner })
        .map_err(to_py_err)
}

/// Correlates a stream into a normalized g2 series
/// {"tau_ns", "g2", "sigma"}; normalize is "tail" or "rate".
#[pyfunction]
#[pyo3(signature = (stream, bin_ns, max_delay_ns, *, normalize="tail"))]
fn correlate<'py>(
    py: Python<'py>,
    stream: &PyTimeTagStream,
    bin_ns: f64,
    max_delay_ns: f64,
    normalize: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let mode = match normalize {
        "tail" => NormalizationMode::TailPlateau,
        "rate" => NormalizationMode::RateProduct,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown normalization {other:?}; expected tail or rate"
            )))
        }
    };
    let hist = correlator::correlate(&stream.inner, bin_ns, max_delay_ns).map_err(to_py_err)?;
    let series = correlator::normalize(&hist, mode, None)
        .and_then(|h| h.to_series())
        .map_err(to_py_err)?;
    let dict = PyDict::new(py);
    dict.set_item("tau_ns", &series.tau_ns)?;
    dict.set_item("g2", &series.g2)?;
    dict.set_item("sigma", &series.sigma)?;
    Ok(dict)
}

/// Center-to-side-peak coincidence ratio of a pulsed stream.
#[pyfunction]
fn pulsed_g2_zero(stream: &PyTimeTagStream, period_ns: f64) -> PyResult<f64> {
    correlator::pulsed_g2_zero(&stream.inner, period_ns).map_err(to_py_err)
}

fn series_from_parts(tau_ns: Vec<f64>, g2: Vec<f64>, sigma: Vec<f64>) -> PyResult<G2Series> {
    let series = G2Series { tau_ns, g2, sigma };
    series.validate().map_err(to_py_err)?;
    Ok(series)
}

/// Fits the antibunching/bunching curve to one g2 series.
#[pyfunction]
#[pyo3(signature = (tau_ns, g2, sigma, *, initial=None))]
fn fit_g2(
    py: Python<'_>,
    tau_ns: Vec<f64>,
    g2: Vec<f64>,
    sigma: Vec<f64>,
    initial: Option<(f64, f64, f64)>,
) -> PyResult<Py<PyAny>> {
    let series = series_from_parts(tau_ns, g2, sigma)?;
    let result = fit::fit_g2_series(&series, initial).map_err(to_py_err)?;
    fit_to_py(py, &result)
}

/// Fits the six-parameter emitter model jointly across powers; `entries`
/// is a list of (power_mw, {"tau_ns", "g2", "sigma"}) pairs.
#[pyfunction]
#[pyo3(signature = (entries, *, initial=None))]
fn fit_g2_global(
    py: Python<'_>,
    entries: Vec<(f64, Bound<'_, PyDict>)>,
    initial: Option<PyEmitterModel>,
) -> PyResult<Py<PyAny>> {
    let mut power_entries = Vec::with_capacity(entries.len());
    for (power_mw, dict) in entries {
        let get = |key: &str| -> PyResult<Vec<f64>> {
            dict.get_item(key)?
                .ok_or_else(|| PyValueError::new_err(format!("series is missing {key:?}")))?
                .extract()
        };
        power_entries.push(PowerEntry {
            power_mw,
            series: series_from_parts(get("tau_ns")?, get("g2")?, get("sigma")?)?,
        });
    }
    let series = PowerSeries {
        entries: power_entries,
    };
    let result =
        fit::fit_g2_global(&series, initial.map(|m| m.inner)).map_err(to_py_err)?;
    fit_to_py(py, &result)
}

/// Fits Lorentzian peaks plus baseline and derives ZPL and Huang-Rhys S.
#[pyfunction]
#[pyo3(signature = (wavelength_nm, counts, *, psb_peaks=2))]
fn fit_spectrum(
    py: Python<'_>,
    wavelength_nm: Vec<f64>,
    counts: Vec<f64>,
    psb_peaks: usize,
) -> PyResult<Py<PyAny>> {
    let spectrum = Spectrum {
        wavelength_nm,
        counts,
    };
    let result = fit::fit_spectrum(&spectrum, psb_peaks).map_err(to_py_err)?;
    fit_to_py(py, &result)
}

/// Fits I(P) = I_inf * P / (P + P_sat) [+ b * P with background=True].
#[pyfunction]
#[pyo3(signature = (power_mw, rate_hz, *, background=false))]
fn fit_saturation(
    py: Python<'_>,
    power_mw: Vec<f64>,
    rate_hz: Vec<f64>,
    background: bool,
) -> PyResult<Py<PyAny>> {
    let data = fit::SaturationData { power_mw, rate_hz };
    let result = fit::fit_saturation(&data, background).map_err(to_py_err)?;
    fit_to_py(py, &result)
}

/// Fits I(theta) = alpha + beta sin^2(theta + phi) and derives visibility.
#[pyfunction]
fn fit_polarization(
    py: Python<'_>,
    angle_deg: Vec<f64>,
    rate_hz: Vec<f64>,
) -> PyResult<Py<PyAny>> {
    let data = fit::PolarizationData { angle_deg, rate_hz };
    let result = fit::fit_polarization(&data).map_err(to_py_err)?;
    fit_to_py(py, &result)
}

/// Builds a sync-referenced decay histogram from a pulsed stream and fits
/// a single-exponential lifetime.
#[pyfunction]
#[pyo3(signature = (stream, period_ns, *, bin_ns=0.2))]
fn fit_lifetime(
    py: Python<'_>,
    stream: &PyTimeTagStream,
    period_ns: f64,
    bin_ns: f64,
) -> PyResult<Py<PyAny>> {
    let hist = correlator::decay_histogram(&stream.inner, period_ns, bin_ns).map_err(to_py_err)?;
    let result = fit::fit_lifetime(&hist).map_err(to_py_err)?;
    fit_to_py(py, &result)
}

#[pymodule]
fn photophys_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEmitterModel>()?;
    m.add_class::<PyTimeTagStream>()?;
    m.add_function(wrap_pyfunction!(simulate_cw, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_pulsed, m)?)?;
    m.add_function(wrap_pyfunction!(correlate, m)?)?;
    m.add_function(wrap_pyfunction!(pulsed_g2_zero, m)?)?;
    m.add_function(wrap_pyfunction!(fit_g2, m)?)?;
    m.add_function(wrap_pyfunction!(fit_g2_global, m)?)?;
    m.add_function(wrap_pyfunction!(fit_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(fit_saturation, m)?)?;
    m.add_function(wrap_pyfunction!(fit_polarization, m)?)?;
    m.add_function(wrap_pyfunction!(fit_lifetime, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

//! Python bindings for the `mogdp` accountant.
//!
//! Every function takes the sampling scheme as keyword arguments: either
//! `poisson_q`, or `batch_size` together with `dataset_size`. Domain errors
//! raise `ValueError`; the GIL is released while accounting runs.

use mogdp::{AccountantConfig, Error, SamplingScheme, ValidationOptions};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Domain(msg) => PyValueError::new_err(msg),
        Error::Internal(msg) => PyRuntimeError::new_err(msg),
    }
}

pub fn scheme(
    poisson_q: Option<f64>,
    batch_size: Option<u64>,
    dataset_size: Option<u64>,
) -> Result<SamplingScheme, String> {
    match (poisson_q, batch_size, dataset_size) {
        (Some(q), None, None) => Ok(SamplingScheme::Poisson { q }),
        (None, Some(batch_size), Some(dataset_size)) => Ok(SamplingScheme::FixedBatch {
            batch_size,
            dataset_size,
        }),
        _ => Err("give either poisson_q, or batch_size and dataset_size".into()),
    }
}

pub fn group_size(k: i64) -> Result<u32, String> {
    u32::try_from(k).map_err(|_| format!("group size must lie in [0, {}], got {k}", u32::MAX))
}

#[allow(clippy::too_many_arguments)]
fn config(
    sigma: f64,
    rounds: u64,
    k: i64,
    poisson_q: Option<f64>,
    batch_size: Option<u64>,
    dataset_size: Option<u64>,
    grid_spacing: f64,
    tail_mass: f64,
) -> PyResult<AccountantConfig> {
    let scheme = scheme(poisson_q, batch_size, dataset_size).map_err(PyValueError::new_err)?;
    let k = group_size(k).map_err(PyValueError::new_err)?;
    let mut config = AccountantConfig::new(sigma, rounds, k, scheme).map_err(to_py)?;
    config.grid_spacing = grid_spacing;
    config.tail_mass = tail_mass;
    config.validate().map_err(to_py)?;
    Ok(config)
}

/// Group-level epsilon at `delta`; `inf` if no finite epsilon reaches it.
#[pyfunction]
#[pyo3(signature = (sigma, rounds, k, delta, *, poisson_q=None, batch_size=None, dataset_size=None, grid_spacing=1e-4, tail_mass=1e-12))]
#[allow(clippy::too_many_arguments)]
fn group_epsilon(
    py: Python<'_>,
    sigma: f64,
    rounds: u64,
    k: i64,
    delta: f64,
    poisson_q: Option<f64>,
    batch_size: Option<u64>,
    dataset_size: Option<u64>,
    grid_spacing: f64,
    tail_mass: f64,
) -> PyResult<f64> {
    let c = config(
        sigma,
        rounds,
        k,
        poisson_q,
        batch_size,
        dataset_size,
        grid_spacing,
        tail_mass,
    )?;
    py.detach(|| mogdp::group_epsilon(&c, delta)).map_err(to_py)
}

/// Group-level delta at `epsilon`.
#[pyfunction]
#[pyo3(signature = (sigma, rounds, k, epsilon, *, poisson_q=None, batch_size=None, dataset_size=None, grid_spacing=1e-4, tail_mass=1e-12))]
#[allow(clippy::too_many_arguments)]
fn group_delta(
    py: Python<'_>,
    sigma: f64,
    rounds: u64,
    k: i64,
    epsilon: f64,
    poisson_q: Option<f64>,
    batch_size: Option<u64>,
    dataset_size: Option<u64>,
    grid_spacing: f64,
    tail_mass: f64,
) -> PyResult<f64> {
    let c = config(
        sigma,
        rounds,
        k,
        poisson_q,
        batch_size,
        dataset_size,
        grid_spacing,
        tail_mass,
    )?;
    py.detach(|| mogdp::group_delta(&c, epsilon)).map_err(to_py)
}

/// Group privacy applied to the single-example guarantee.
#[pyfunction]
#[pyo3(signature = (sigma, rounds, k, delta, *, poisson_q=None, batch_size=None, dataset_size=None, grid_spacing=1e-4, tail_mass=1e-12))]
#[allow(clippy::too_many_arguments)]
fn vadhan_group_epsilon(
    py: Python<'_>,
    sigma: f64,
    rounds: u64,
    k: i64,
    delta: f64,
    poisson_q: Option<f64>,
    batch_size: Option<u64>,
    dataset_size: Option<u64>,
    grid_spacing: f64,
    tail_mass: f64,
) -> PyResult<f64> {
    let c = config(
        sigma,
        rounds,
        k,
        poisson_q,
        batch_size,
        dataset_size,
        grid_spacing,
        tail_mass,
    )?;
    py.detach(|| mogdp::vadhan_group_epsilon(&c, delta))
        .map_err(to_py)
}

/// `k` times the single-example epsilon. A comparison heuristic, not a
/// certified bound.
#[pyfunction]
#[pyo3(signature = (sigma, rounds, k, delta, *, poisson_q=None, batch_size=None, dataset_size=None, grid_spacing=1e-4, tail_mass=1e-12))]
#[allow(clippy::too_many_arguments)]
fn linear_lower_bound(
    py: Python<'_>,
    sigma: f64,
    rounds: u64,
    k: i64,
    delta: f64,
    poisson_q: Option<f64>,
    batch_size: Option<u64>,
    dataset_size: Option<u64>,
    grid_spacing: f64,
    tail_mass: f64,
) -> PyResult<f64> {
    let c = config(
        sigma,
        rounds,
        k,
        poisson_q,
        batch_size,
        dataset_size,
        grid_spacing,
        tail_mass,
    )?;
    py.detach(|| mogdp::linear_lower_bound(&c, delta))
        .map_err(to_py)
}

/// Rows `{k, epsilon_mog, epsilon_vadhan, epsilon_lower_lb}` for
/// `k = 1..=k_max`.
#[pyfunction]
#[pyo3(signature = (sigma, rounds, delta, k_max=16, *, poisson_q=None, batch_size=None, dataset_size=None, grid_spacing=1e-4, tail_mass=1e-12))]
#[allow(clippy::too_many_arguments)]
fn sweep<'py>(
    py: Python<'py>,
    sigma: f64,
    rounds: u64,
    delta: f64,
    k_max: i64,
    poisson_q: Option<f64>,
    batch_size: Option<u64>,
    dataset_size: Option<u64>,
    grid_spacing: f64,
    tail_mass: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let c = config(
        sigma,
        rounds,
        1,
        poisson_q,
        batch_size,
        dataset_size,
        grid_spacing,
        tail_mass,
    )?;
    let k_max = group_size(k_max).map_err(PyValueError::new_err)?;
    let rows = py
        .detach(|| mogdp::sweep(&c, delta, k_max))
        .map_err(to_py)?;
    rows.iter()
        .map(|row| {
            let dict = PyDict::new(py);
            dict.set_item("k", row.k)?;
            dict.set_item("epsilon_mog", row.epsilon_mog)?;
            dict.set_item("epsilon_vadhan", row.epsilon_vadhan)?;
            dict.set_item("epsilon_lower_lb", row.epsilon_lower_lb)?;
            dict.set_item("direction_dominant", row.mog.dominant.as_str())?;
            Ok(dict)
        })
        .collect()
}

/// Runs the oracle check suite; returns `(all_passed, report)`.
#[pyfunction]
#[pyo3(signature = (seed=0, grid_spacing=1e-4, samples=1_000_000))]
fn validate(
    py: Python<'_>,
    seed: u64,
    grid_spacing: f64,
    samples: u64,
) -> PyResult<(bool, String)> {
    let options = ValidationOptions {
        grid_spacing,
        seed,
        samples,
    };
    let report = py
        .detach(|| mogdp::run_validation(&options))
        .map_err(to_py)?;
    Ok((report.all_passed(), report.to_string()))
}

#[pymodule]
fn pymogdp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(group_epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(group_delta, m)?)?;
    m.add_function(wrap_pyfunction!(vadhan_group_epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(linear_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactly_one_scheme_is_accepted() {
        assert_eq!(
            scheme(Some(0.1), None, None),
            Ok(SamplingScheme::Poisson { q: 0.1 })
        );
        assert_eq!(
            scheme(None, Some(5), Some(50)),
            Ok(SamplingScheme::FixedBatch {
                batch_size: 5,
                dataset_size: 50
            })
        );
        assert!(scheme(None, None, None).is_err());
        assert!(scheme(Some(0.1), Some(5), Some(50)).is_err());
        assert!(scheme(None, Some(5), None).is_err());
    }

    #[test]
    fn negative_group_sizes_are_rejected() {
        assert_eq!(group_size(3), Ok(3));
        assert!(group_size(-1).is_err());
        assert!(group_size(i64::from(u32::MAX) + 1).is_err());
    }
}

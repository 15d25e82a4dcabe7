//! Python bindings. Exact values come back as `fractions.Fraction`; larger
//! reports come back as JSON strings.

use pdescrow_core::deposit::DecompositionReport;
use pdescrow_core::escrow::run_match;
use pdescrow_core::explorer::{enumerate as census, CensusOptions};
use pdescrow_core::fragment::{
    classify as classify_counts, fragment_deposit as shape_deposit, Fragment, FragmentCounts,
};
use pdescrow_core::{
    self as core, Composition, DecomposePolicy, DepositPair, Rational, StrategyScript,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList, PyTuple};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Accepts int, Fraction, decimal string or `"n/d"`.
fn rational(obj: &Bound<'_, PyAny>) -> PyResult<Rational> {
    obj.str()?.to_str()?.parse().map_err(err)
}

fn fraction<'py>(py: Python<'py>, q: &Rational) -> PyResult<Bound<'py, PyAny>> {
    py.import("fractions")?
        .getattr("Fraction")?
        .call1((q.to_string(),))
}

fn pair<'py>(py: Python<'py>, d: &DepositPair) -> PyResult<Bound<'py, PyTuple>> {
    PyTuple::new(py, [fraction(py, &d.tom)?, fraction(py, &d.jack)?])
}

fn deposits(t: &Bound<'_, PyAny>) -> PyResult<DepositPair> {
    let (tom, jack): (Bound<'_, PyAny>, Bound<'_, PyAny>) = t.extract()?;
    Ok(DepositPair::new(rational(&tom)?, rational(&jack)?))
}

fn parse_policy(s: &str) -> PyResult<DecomposePolicy> {
    s.parse().map_err(err)
}

fn matrix_or_default(m: Option<PyRef<'_, Matrix>>) -> core::PayoffMatrix {
    m.map(|m| m.0.clone())
        .unwrap_or_else(core::PayoffMatrix::worked)
}

fn composition((n_bc, n_ad, n_ac): (usize, usize, usize)) -> Composition {
    Composition::new(n_bc, n_ad, n_ac)
}

/// Stage-game payoffs. Entries are named as in the (AC, AD, BC, BD) cells:
/// (a, b), (c, d), (e, f), (g, h).
#[pyclass(module = "pdescrow", frozen)]
struct Matrix(core::PayoffMatrix);

#[pymethods]
impl Matrix {
    #[new]
    #[allow(clippy::too_many_arguments)]
    fn new(
        a: &Bound<'_, PyAny>,
        b: &Bound<'_, PyAny>,
        c: &Bound<'_, PyAny>,
        d: &Bound<'_, PyAny>,
        e: &Bound<'_, PyAny>,
        f: &Bound<'_, PyAny>,
        g: &Bound<'_, PyAny>,
        h: &Bound<'_, PyAny>,
    ) -> PyResult<Self> {
        Ok(Matrix(core::PayoffMatrix {
            a: rational(a)?,
            b: rational(b)?,
            c: rational(c)?,
            d: rational(d)?,
            e: rational(e)?,
            f: rational(f)?,
            g: rational(g)?,
            h: rational(h)?,
        }))
    }

    #[staticmethod]
    fn worked() -> Self {
        Matrix(core::PayoffMatrix::worked())
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        serde_json::from_str(s).map(Matrix).map_err(err)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("serializable matrix")
    }

    /// Names of the violated ordering axioms, e.g. `["a > g"]`.
    fn violations(&self) -> Vec<String> {
        self.0
            .violations()
            .into_iter()
            .map(|v| v.inequality)
            .collect()
    }

    /// Raises ValueError unless e > a > g > c and d > b > h > f.
    fn validate(&self) -> PyResult<()> {
        self.0.validate().map_err(err)
    }

    fn cell<'py>(&self, py: Python<'py>, pair: &str) -> PyResult<Bound<'py, PyTuple>> {
        let p: core::StagePair = pair.parse().map_err(err)?;
        let (t, j) = self.0.stage_payoff(p);
        pair_of(py, &t, &j)
    }

    fn __repr__(&self) -> String {
        let m = &self.0;
        format!(
            "Matrix(a={}, b={}, c={}, d={}, e={}, f={}, g={}, h={})",
            m.a, m.b, m.c, m.d, m.e, m.f, m.g, m.h
        )
    }

    fn __eq__(&self, other: &Matrix) -> bool {
        self.0 == other.0
    }
}

fn pair_of<'py>(py: Python<'py>, t: &Rational, j: &Rational) -> PyResult<Bound<'py, PyTuple>> {
    PyTuple::new(py, [fraction(py, t)?, fraction(py, j)?])
}

/// An ordered sequence of stage pairs such as `"AC,AD,BC"`.
#[pyclass(module = "pdescrow", frozen)]
struct Agreement(core::Agreement);

#[pymethods]
impl Agreement {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        text.parse().map(Agreement).map_err(err)
    }

    /// `(n_bc, n_ad, n_ac)`; BD stages are not counted.
    fn composition(&self) -> (usize, usize, usize) {
        let c = self.0.composition();
        (c.n_bc, c.n_ad, c.n_ac)
    }

    #[pyo3(signature = (matrix=None))]
    fn payoff<'py>(
        &self,
        py: Python<'py>,
        matrix: Option<PyRef<'_, Matrix>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let s = core::agreement_payoff(&self.0, &matrix_or_default(matrix));
        let d = PyDict::new(py);
        d.set_item("stages", s.stages)?;
        d.set_item("tom_total", fraction(py, &s.tom_total)?)?;
        d.set_item("jack_total", fraction(py, &s.jack_total)?)?;
        d.set_item("tom_expectation", fraction(py, &s.tom_expectation)?)?;
        d.set_item("jack_expectation", fraction(py, &s.jack_expectation)?)?;
        Ok(d)
    }

    #[pyo3(signature = (matrix=None))]
    fn is_effective(&self, matrix: Option<PyRef<'_, Matrix>>) -> bool {
        core::is_effective(&self.0, &matrix_or_default(matrix))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Agreement('{}')", self.0)
    }
}

/// Fragment type name for the given stage counts.
#[pyfunction]
fn classify(x_ac: usize, y_bc: usize, z_ad: usize) -> PyResult<String> {
    classify_counts(FragmentCounts::new(x_ac, y_bc, z_ad))
        .map(|t| t.to_string())
        .map_err(err)
}

/// Deposits for a fragment given as `"x*AC+z*AD+y*BC"`.
#[pyfunction]
#[pyo3(signature = (fragment, matrix=None))]
fn fragment_deposit<'py>(
    py: Python<'py>,
    fragment: &str,
    matrix: Option<PyRef<'_, Matrix>>,
) -> PyResult<Bound<'py, PyTuple>> {
    let f: Fragment = fragment.parse().map_err(err)?;
    pair(
        py,
        &shape_deposit(&f, &matrix_or_default(matrix)).map_err(err)?,
    )
}

/// Decomposition report (fragments, deposits, refund schedule) as JSON.
#[pyfunction]
#[pyo3(signature = (composition_counts, matrix=None, policy="balanced"))]
fn decompose(
    composition_counts: (usize, usize, usize),
    matrix: Option<PyRef<'_, Matrix>>,
    policy: &str,
) -> PyResult<String> {
    let m = matrix_or_default(matrix);
    let d =
        core::decompose(composition(composition_counts), &m, parse_policy(policy)?).map_err(err)?;
    let report = DecompositionReport::build(&d, &m).map_err(err)?;
    Ok(serde_json::to_string(&report).expect("serializable report"))
}

#[pyfunction]
#[pyo3(signature = (composition_counts, matrix=None, policy="balanced"))]
fn deposit<'py>(
    py: Python<'py>,
    composition_counts: (usize, usize, usize),
    matrix: Option<PyRef<'_, Matrix>>,
    policy: &str,
) -> PyResult<Bound<'py, PyTuple>> {
    let m = matrix_or_default(matrix);
    let d =
        core::decompose(composition(composition_counts), &m, parse_policy(policy)?).map_err(err)?;
    pair(py, &d.deposit(&m).map_err(err)?)
}

/// `[(stage, tom, jack), ...]`: the amount held once `stage` stages are done.
#[pyfunction]
#[pyo3(signature = (composition_counts, matrix=None, policy="balanced"))]
fn refund_schedule<'py>(
    py: Python<'py>,
    composition_counts: (usize, usize, usize),
    matrix: Option<PyRef<'_, Matrix>>,
    policy: &str,
) -> PyResult<Bound<'py, PyList>> {
    let m = matrix_or_default(matrix);
    let d =
        core::decompose(composition(composition_counts), &m, parse_policy(policy)?).map_err(err)?;
    let s = core::refund_schedule(&d, &m).map_err(err)?;
    let rows = (0..=s.horizon())
        .map(|k| {
            let r = s.remaining_after(k);
            PyTuple::new(
                py,
                [
                    k.into_pyobject(py)?.into_any(),
                    fraction(py, &r.tom)?,
                    fraction(py, &r.jack)?,
                ],
            )
        })
        .collect::<PyResult<Vec<_>>>()?;
    PyList::new(py, rows)
}

#[pyfunction]
#[pyo3(signature = (agreement, matrix=None))]
fn minimal_deposits<'py>(
    py: Python<'py>,
    agreement: &str,
    matrix: Option<PyRef<'_, Matrix>>,
) -> PyResult<Bound<'py, PyTuple>> {
    let ag: core::Agreement = agreement.parse().map_err(err)?;
    pair(py, &core::minimal_deposits(&ag, &matrix_or_default(matrix)))
}

/// Verification report as JSON.
#[pyfunction]
#[pyo3(signature = (agreement, deposit_pair, matrix=None))]
fn verify(
    agreement: &str,
    deposit_pair: &Bound<'_, PyAny>,
    matrix: Option<PyRef<'_, Matrix>>,
) -> PyResult<String> {
    let ag: core::Agreement = agreement.parse().map_err(err)?;
    let r = core::verify(&ag, &deposits(deposit_pair)?, &matrix_or_default(matrix));
    Ok(serde_json::to_string(&r).expect("serializable report"))
}

#[pyfunction]
#[pyo3(signature = (agreement, deposit_pair, matrix=None))]
fn exhaustive_oracle(
    agreement: &str,
    deposit_pair: &Bound<'_, PyAny>,
    matrix: Option<PyRef<'_, Matrix>>,
) -> PyResult<bool> {
    let ag: core::Agreement = agreement.parse().map_err(err)?;
    core::exhaustive_oracle(&ag, &deposits(deposit_pair)?, &matrix_or_default(matrix)).map_err(err)
}

/// Census over all compositions of `n` stages as JSON. `max_ac=None`
/// removes the cap on AC stages.
#[pyfunction]
#[pyo3(signature = (n, matrix=None, max_ac=Some(2), policy="balanced"))]
fn enumerate(
    n: usize,
    matrix: Option<PyRef<'_, Matrix>>,
    max_ac: Option<usize>,
    policy: &str,
) -> PyResult<String> {
    let opts = CensusOptions {
        max_ac,
        policy: parse_policy(policy)?,
        ..CensusOptions::default()
    };
    let r = census(n, &matrix_or_default(matrix), &opts).map_err(err)?;
    Ok(serde_json::to_string(&r).expect("serializable report"))
}

/// Headline census counts: total, effective, per-threshold counts and the
/// frontier as `(n_bc, n_ad, n_ac)` tuples.
#[pyfunction]
#[pyo3(signature = (n, matrix=None, max_ac=Some(2)))]
fn census_summary<'py>(
    py: Python<'py>,
    n: usize,
    matrix: Option<PyRef<'_, Matrix>>,
    max_ac: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let opts = CensusOptions {
        max_ac,
        ..CensusOptions::default()
    };
    let r = census(n, &matrix_or_default(matrix), &opts).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("total", r.total_enumerated)?;
    d.set_item("effective", r.effective)?;
    let thresholds = PyDict::new(py);
    for t in &r.threshold_counts {
        thresholds.set_item(t.threshold.to_string(), t.count)?;
    }
    d.set_item("thresholds", thresholds)?;
    let frontier: Vec<(usize, usize, usize)> = r
        .frontier
        .iter()
        .map(|c| (c.n_bc, c.n_ad, c.n_ac))
        .collect();
    d.set_item("frontier", frontier)?;
    d.set_item("discrepancies", r.discrepancies.len())?;
    Ok(d)
}

/// Play one escrowed match and return the JSONL transcript. Strategies are
/// `compliant`, `defect-at:K`, `best-response` or `random:P`; Tom's random
/// stream uses `seed`, Jack's `seed + 1`.
#[pyfunction]
#[pyo3(signature = (agreement, deposit_pair, tom="compliant", jack="compliant", matrix=None, seed=0))]
fn simulate(
    agreement: &str,
    deposit_pair: &Bound<'_, PyAny>,
    tom: &str,
    jack: &str,
    matrix: Option<PyRef<'_, Matrix>>,
    seed: u64,
) -> PyResult<String> {
    let ag: core::Agreement = agreement.parse().map_err(err)?;
    let mut t = StrategyScript::parse(tom, seed).map_err(err)?;
    let mut j = StrategyScript::parse(jack, seed.wrapping_add(1)).map_err(err)?;
    let tr = run_match(
        &ag,
        &deposits(deposit_pair)?,
        &mut t,
        &mut j,
        &matrix_or_default(matrix),
        None,
    )
    .map_err(err)?;
    Ok(tr.to_jsonl())
}

#[pymodule]
fn pdescrow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Matrix>()?;
    m.add_class::<Agreement>()?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(fragment_deposit, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(deposit, m)?)?;
    m.add_function(wrap_pyfunction!(refund_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(minimal_deposits, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(exhaustive_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate, m)?)?;
    m.add_function(wrap_pyfunction!(census_summary, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}

//! Drives the module through an embedded interpreter.

use pyo3::prelude::*;
use pyo3::types::PyDict;

fn run(code: &str) {
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(sgfcn_py::sgfcn_py)(py);
        let globals = PyDict::new(py);
        globals.set_item("m", m).unwrap();
        let code = std::ffi::CString::new(code).unwrap();
        py.run(&code, Some(&globals), None).map_err(|e| e.display(py)).unwrap();
    });
}

#[test]
fn fixation_map_and_metrics() {
    run(r#"
import math
g = m.fixation_map([(5.0, 4.0)], 9, 11, window=3)
assert abs(g[4][5] - 1.0 / (3 * math.pi)) < 1e-15
assert m.cc(g, g) == 1.0 and abs(m.sim(g, g) - 1.0) < 1e-12 and m.emd(g, g, grid=3) == 0.0
assert list(m.quantize_map([[0.0, 0.5, 1.0]])) == [0, 128, 255]
v, grad = m.loss_quadratic_ce([[0.5]], [[0.5]], eta=1.0)
assert abs(v - math.log(2)) < 1e-12 and grad == [[0.0]]
"#);
}

#[test]
fn model_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sgf2.json");
    run(&format!(
        r#"
f = [[[0.1 * ((r + c) % 7), 0.5, 0.2] for c in range(16)] for r in range(16)]
a = m.Model.init("sgf2", 16, 16, seed=4)
assert a.variant == "SGF2" and a.param_count > 0
a.save({path:?})
assert m.Model.load({path:?}).predict(f) == a.predict(f)
for bad in [lambda: m.Model.init("nope"), lambda: a.predict(f, prev=[[0.0]]), lambda: m.cc([[1.0, 2.0], [3.0]], [[1.0]])]:
    try:
        bad()
    except ValueError:
        pass
    else:
        raise AssertionError("accepted bad input")
try:
    m.Model.load("/nonexistent/x.json")
except IOError:
    pass
else:
    raise AssertionError("missing file loaded")
"#,
        path = path.to_str().unwrap()
    ));
}

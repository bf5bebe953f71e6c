import numpy as np
import pytest

from ocnlme import io
from ocnlme.data import SubjectData
from ocnlme.errors import ConfigurationError, InputFileError, ParseError, ValidationError


def _write(path, text):
    path.write_text(text)
    return path


def test_dataset_roundtrip_is_exact(tmp_path, rng):
    pop = [SubjectData(str(i), np.sort(rng.uniform(0, 5, 4)), rng.standard_normal((4, 2)) * 1e3)
           for i in (10, 2, 1)]
    io.write_dataset(tmp_path / "d.csv", pop)
    back = io.load_dataset(tmp_path / "d.csv", d_obs=2)
    assert [s.subject_id for s in back] == ["1", "2", "10"]
    by_id = {s.subject_id: s for s in pop}
    for s in back:
        assert np.array_equal(s.times, by_id[s.subject_id].times)
        assert np.array_equal(s.observations, by_id[s.subject_id].observations)


def test_rows_in_any_order(tmp_path):
    p = _write(tmp_path / "d.csv", "subject,time,y1\na,2,3\nb,0,1\na,0,5\na,1,4\nb,1,0\n")
    pop = io.load_dataset(p)
    assert [s.subject_id for s in pop] == ["a", "b"]
    assert np.array_equal(pop[0].times, [0, 1, 2])
    assert np.array_equal(pop[0].observations[:, 0], [5, 4, 3])


def test_errors(tmp_path):
    with pytest.raises(InputFileError):
        io.load_dataset(tmp_path / "missing.csv")
    p = _write(tmp_path / "dup.csv", "subject,time,y1\n1,0,1\n1,1,2\n1,1,3\n")
    with pytest.raises(ValidationError, match="duplicate"):
        io.load_dataset(p)
    p = _write(tmp_path / "nan.csv", "subject,time,y1\n1,0,1\n1,1,abc\n")
    with pytest.raises(ParseError, match="row 3"):
        io.load_dataset(p)
    p = _write(tmp_path / "hdr.csv", "id,time,y1\n1,0,1\n")
    with pytest.raises(ParseError, match="row 1"):
        io.load_dataset(p)
    p = _write(tmp_path / "ok.csv", "subject,time,y1\n1,0,1\n1,1,2\n")
    with pytest.raises(ConfigurationError):
        io.load_dataset(p, d_obs=2)
    p = _write(tmp_path / "bad.json", "{not json")
    with pytest.raises(ParseError):
        io.read_json(p)


def test_fit_json_roundtrip(tmp_path, lin2d, lin2d_fit):
    path = io.write_json(tmp_path / "fit.json", io.fit_to_dict(lin2d_fit, {"se": np.array([np.inf, 1.0])}))
    doc = io.read_json(path)
    assert np.array_equal(doc["theta"], lin2d_fit.theta_hat)
    assert doc["G"] == lin2d_fit.G_value
    assert doc["variance"]["se"] == [None, 1.0]
    assert len(doc["subjects"]) == len(lin2d_fit.subjects)
    theta, delta = io.start_point(doc, lin2d)
    assert np.array_equal(theta, lin2d_fit.theta_hat) and np.array_equal(delta, lin2d_fit.delta_hat)
    with pytest.raises(ConfigurationError):
        io.start_point({"theta": [0.0]}, lin2d)


def test_start_point_from_truth(lin2d):
    theta, delta = io.start_point({"theta": [0.1, 0.2], "psi": [0.5], "sigma": 0.05}, lin2d)
    assert delta == pytest.approx([np.log(0.1)])


def test_tables(tmp_path, lin2d_cohort, lin2d_fit):
    _, pop, _ = lin2d_cohort
    from ocnlme.uncertainty import residual_control_report

    p1, p2 = io.write_controls(tmp_path, residual_control_report(lin2d_fit, pop))
    h1, r1 = io.read_table(p1)
    h2, r2 = io.read_table(p2)
    assert h1 == ["subject_id", "t", "u_1", "u_2"]
    assert h2 == ["t", "mean_u_1", "lo_1", "hi_1", "mean_u_2", "lo_2", "hi_2"]
    assert len(r1) == len(pop) * len(r2)
    io.write_cv_table(tmp_path / "cv.csv", [(np.eye(1) * 100.0, 0.25), (np.eye(1), np.inf)])
    h, rows = io.read_table(tmp_path / "cv.csv")
    assert h == ["U", "EP"] and rows[0] == ["100", "0.25"] and rows[1][1] == "inf"

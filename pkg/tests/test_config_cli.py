import json
import math
import textwrap

import pytest
from hypothesis import given
from hypothesis import strategies as st

from polariton_lab.cli import main
from polariton_lab.config import dump_config, parse_config
from polariton_lab.errors import ConfigError

DISPERSION = textwrap.dedent("""
    mode: dispersion
    model:
      g_sqrt_n: 10.0
      omega_plus: 0.7071067811865476
      omega_minus: 0.7071067811865476
    dispersion:
      k_min: -0.2
      k_max: 0.2
      n_k: 41
""")

TRANSFORM = textwrap.dedent("""
    mode: transform
    transform:
      coupling: [[1, 0], [0, 1], [1, 1]]
""")

STORAGE = textwrap.dedent("""
    mode: scenario
    model: {g_sqrt_n: 5.0, omega_plus: 3.0, gamma_plus: 0, gamma_minus: 0}
    grid: {n_points: 256, z_min: -32, z_max: 32}
    pulse: {center: -8, width: 3}
    schedule:
      initial: [3.0, 0]
      segments:
        - {duration: 0.05, omega_plus: 0, omega_minus: 0}
    scenario: {kind: storage}
""")


def _errors(text, **kw):
    with pytest.raises(ConfigError) as info:
        parse_config(text, **kw)
    return info.value.errors


def test_minimal_dispersion_config():
    cfg = parse_config(DISPERSION)
    assert cfg.mode == "dispersion"
    assert cfg.model.g_sqrt_n == 10.0
    assert cfg.dispersion.n_k == 41 and cfg.dispersion.fd_step == 1e-4


def test_degenerate_controls_reported():
    text = DISPERSION.replace("0.7071067811865476", "0")
    assert any("degenerate control fields" in e for e in _errors(text))


def test_negative_gamma_names_field():
    text = DISPERSION.replace("  g_sqrt_n: 10.0", "  g_sqrt_n: 10.0\n  gamma_plus: -1")
    (err,) = _errors(text)
    assert err.startswith("model.gamma_plus:") and ">= 0" in err


def test_all_errors_collected():
    text = DISPERSION.replace("n_k: 41", "n_k: 1\n  bogus: 3").replace("mode: dispersion", "mode: dispersion\nextra: 1")
    text = text.replace("g_sqrt_n: 10.0", "g_sqrt_n: -2")
    errs = _errors(text)
    joined = "\n".join(errs)
    for path in ("extra", "model.g_sqrt_n", "dispersion.n_k", "dispersion.bogus"):
        assert path in joined
    assert len(errs) >= 4


def test_missing_sections_and_bad_mode():
    assert any(e.startswith("dispersion:") for e in _errors("mode: dispersion\nmodel: {g_sqrt_n: 1, omega_plus: 1}"))
    assert any(e.startswith("mode:") for e in _errors("mode: plot"))
    assert _errors("[1, 2")[0].startswith("<root>")


def test_grid_and_pulse_validation():
    text = STORAGE.replace("n_points: 256", "n_points: 100").replace("center: -8", "center: -30")
    errs = _errors(text)
    assert any(e.startswith("grid.n_points") for e in errs)
    text = STORAGE.replace("center: -8", "center: -30")
    assert any(e.startswith("pulse:") and "not inside grid" in e for e in _errors(text))


def test_complex_pairs_accepted():
    cfg = parse_config(DISPERSION.replace("omega_minus: 0.7071067811865476", "omega_minus: [0.5, 0.5]"))
    assert cfg.model.omega_minus == complex(0.5, 0.5)


def test_mode_override():
    cfg = parse_config(DISPERSION.replace("mode: dispersion\n", ""), mode="dispersion")
    assert cfg.mode == "dispersion"


@pytest.mark.parametrize("text", [DISPERSION, TRANSFORM, STORAGE])
def test_roundtrip_idempotent(text):
    once = dump_config(parse_config(text))
    assert dump_config(parse_config(once)) == once
    assert parse_config(once) == parse_config(text)


@given(st.floats(0, 100), st.floats(-50, 50), st.floats(-50, 50), st.floats(0, 10))
def test_roundtrip_property(g, re, im, gamma):
    text = f"mode: transform\ntransform: {{from_model: true}}\nmodel: {{g_sqrt_n: {g!r}, omega_plus: [{re!r}, {im!r}], gamma_minus: {gamma!r}}}\n"
    once = dump_config(parse_config(text))
    assert dump_config(parse_config(once)) == once


def _run_cli(tmp_path, text, mode, name="out"):
    cfg = tmp_path / f"{name}.yaml"
    cfg.write_text(text)
    out = tmp_path / name
    return main([mode, "--config", str(cfg), "--out", str(out)]), out


def test_cli_transform_m_system(tmp_path):
    code, out = _run_cli(tmp_path, TRANSFORM, "transform")
    assert code == 0
    data = json.loads((out / "transform.json").read_text())
    (dark,) = data["dark_vectors"]
    s = 1 / math.sqrt(3)
    assert [round(x[0], 15) for x in dark] == [round(s, 15), round(s, 15), round(-s, 15), 0, 0]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["passed"] and "gamma = c = hbar = 1" in manifest["units"]
    names = [c["name"] for c in manifest["checks"]]
    assert len(names) == len(set(names))


def test_cli_dispersion_outputs_and_determinism(tmp_path):
    code, out = _run_cli(tmp_path, DISPERSION, "dispersion", "a")
    code2, out2 = _run_cli(tmp_path, DISPERSION, "dispersion", "b")
    assert code == code2 == 0
    for name in ("branches.csv", "dispersion.json", "manifest.json"):
        assert (out / name).read_bytes() == (out2 / name).read_bytes()
    header = (out / "branches.csv").read_text().split("\n")[0]
    assert header.startswith("k,re_omega_1,im_omega_1")
    data = json.loads((out / "dispersion.json").read_text())
    assert data["coefficients"]["c2"][1] == pytest.approx(-1 / 101 / 100)
    checks = {c["name"]: c for c in json.loads((out / "manifest.json").read_text())["checks"]}
    assert checks["dispersion.c2_rel"]["passed"]


def test_cli_config_error_exit_code(tmp_path):
    code, _ = _run_cli(tmp_path, DISPERSION.replace("g_sqrt_n: 10.0", "g_sqrt_n: -1"), "dispersion")
    assert code == 2
    assert main(["dispersion", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_cli_physics_error_exit_code(tmp_path):
    text = STORAGE.replace("mode: scenario", "mode: propagate").replace(
        "scenario: {kind: storage}", "propagate: {t_final: 1}").replace("width: 3", "width: 0.3")
    code, _ = _run_cli(tmp_path, text, "propagate")
    assert code == 1


def test_cli_diagnostic_only_run_exits_zero(tmp_path):
    code, out = _run_cli(tmp_path, STORAGE, "scenario")
    manifest = json.loads((out / "manifest.json").read_text())
    assert code == 0
    assert manifest["warnings"]
    assert not any(c["enforced"] for c in manifest["checks"])
    assert (out / "snapshots" / "snap_0000.csv").exists()
    assert (out / "timing.json").exists()


def test_exponent_floats_without_dot():
    cfg = parse_config(DISPERSION.replace("n_k: 41", "n_k: 41\n  fd_step: 1e-4"))
    assert cfg.dispersion.fd_step == 1e-4

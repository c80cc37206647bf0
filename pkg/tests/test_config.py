import json
from dataclasses import replace

import pytest

from sto_engine import config as settings
from sto_engine.dynamics.graphon import BlockGraphon
from sto_engine.errors import ConfigError, ParameterError
from sto_engine.services import sto


def _write(tmp_path, text, name="experiment.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def _error(path):
    with pytest.raises(ConfigError) as info:
        settings.parse_config(path)
    return info.value


def test_minimal_ini_uses_defaults(tmp_path):
    config = settings.parse_config(_write(tmp_path, "[grid]\nnz = 8\n"))
    assert config.nz == 8
    assert config.nx == settings.DEFAULT_NX
    assert config.probes == list(settings.DEFAULT_PROBES)
    f = settings.circle_maps.lookup_map(config.map)
    h = settings.circle_maps.lookup_coupling(config.coupling)
    assert config.alpha == pytest.approx(sto.alpha_hat(f, h))
    assert not config.alpha_warning


def test_unknown_map_is_unresolvable(tmp_path):
    err = _error(_write(tmp_path, "[model]\nmap = quadrupling\n"))
    assert err.code == "unresolvable_name"
    assert err.line == 2


def test_unknown_key_reports_line(tmp_path):
    err = _error(_write(tmp_path, "[grid]\nnz = 8\nny = 3\n"))
    assert err.code == "unknown_key"
    assert err.line == 3
    assert _error(_write(tmp_path, "[plotting]\ncolor = red\n")).code == "unknown_key"


def test_type_mismatch_reports_line(tmp_path):
    err = _error(_write(tmp_path, "# grid\n[grid]\nnx = many\n"))
    assert err.code == "type_mismatch"
    assert err.line == 3
    assert "(line 3)" in str(err)


def test_parse_and_file_errors(tmp_path):
    assert _error(_write(tmp_path, "nz = 3\n")).code == "parse_error"
    assert _error(tmp_path / "absent.ini").code == "missing_file"
    err = _error(_write(tmp_path, '{\n  "grid": {\n    "nz": 8,\n  }\n}\n', "bad.json"))
    assert err.code == "parse_error"
    assert err.line is not None


def test_json_nested_and_dotted_keys(tmp_path):
    text = json.dumps({"grid.nz": 8, "solver": {"tol": 1e-8, "strict": False}}, indent=2)
    config = settings.parse_config(_write(tmp_path, text, "experiment.json"))
    assert config.nz == 8
    assert config.tol == 1e-8
    assert config.strict is False


def test_json_type_mismatch(tmp_path):
    text = '{\n  "grid": {\n    "nz": 8.5\n  }\n}\n'
    err = _error(_write(tmp_path, text, "experiment.json"))
    assert err.code == "type_mismatch"
    assert err.line == 3


def test_lists_and_matrices(tmp_path):
    text = (
        "[graphon]\ntype = block\ncuts = 0.25\nvalues = [[1.0, 0.1], [0.1, 0.4]]\n"
        "[sweep]\nN_list = [50, 100]\nz_star = 0.2, 0.8\n"
    )
    config = settings.parse_config(_write(tmp_path, text))
    assert config.cuts == [0.25]
    assert config.values == [[1.0, 0.1], [0.1, 0.4]]
    assert config.N_list == [50, 100]
    assert config.z_stars == [0.2, 0.8]
    assert isinstance(settings.build_graphon(config), BlockGraphon)


def test_invalid_values(tmp_path):
    assert _error(_write(tmp_path, "[solver]\ntol = 0\n")).code == "invalid_value"
    assert _error(_write(tmp_path, "[sweep]\nN_list = 400, 100\n")).code == "invalid_value"
    assert _error(_write(tmp_path, "[sweep]\nz_star = 1.5\n")).code == "invalid_value"
    both = _error(_write(tmp_path, "[model]\nalpha = 0.1\nalpha_fraction = 0.5\n"))
    assert both.code == "invalid_value"
    assert _error(_write(tmp_path, "[model]\nmap = perturbed_doubling\nmap_eps = 1.5\n")).code == "invalid_value"


def test_probe_names_and_params(tmp_path):
    text = "[probes]\nnames = expansion, ulam_oracle\nulam_trials = 7\n[thresholds]\nulam_oracle = 0.5\n"
    config = settings.parse_config(_write(tmp_path, text))
    assert config.probes == ["expansion", "ulam_oracle"]
    assert config.param_table()["ulam_trials"] == 7
    assert config.param_table()["memory_loss_steps"] == settings.PROBE_PARAMS["memory_loss_steps"]
    assert config.threshold_table()["ulam_oracle"] == 0.5
    assert config.threshold_table()["expansion"] == settings.PROBE_THRESHOLDS["expansion"]
    assert _error(_write(tmp_path, "[probes]\nnames = spectral_gap\n")).code == "unresolvable_name"
    assert _error(_write(tmp_path, "[probes]\nnames = expansion, expansion\n")).code == "invalid_value"


def test_alpha_warning(tmp_path):
    config = settings.parse_config(_write(tmp_path, "[model]\nalpha = 5.0\n"))
    assert config.alpha == 5.0
    assert config.alpha_warning


def test_zero_coupling_resolves_alpha_to_zero(tmp_path):
    config = settings.parse_config(_write(tmp_path, "[model]\ncoupling = zero\n"))
    assert config.alpha == 0.0
    assert not config.alpha_warning


def test_presets():
    assert set(settings.PRESETS) == {"clustered", "decay", "er"}
    clustered = settings.load_preset("clustered")
    assert clustered.graphon == "block"
    assert clustered.initial == "two_cluster"
    assert "concentration" in settings.load_preset("er").probes
    with pytest.raises(ConfigError):
        settings.load_preset("ring")


def test_file_overrides_preset(tmp_path):
    config = settings.parse_config(_write(tmp_path, "[run]\npreset = decay\n[grid]\nnz = 16\n"))
    assert config.preset == "decay"
    assert config.graphon == "translation"
    assert config.nz == 16


def test_config_hash_ignores_threads():
    config = settings.load_preset("decay")
    assert config.config_hash() == replace(config, threads=8).config_hash()
    assert config.config_hash() != replace(config, seed=1).config_hash()
    assert "threads" not in config.to_dict()


def test_build_model(small_config):
    model = settings.build_model(small_config)
    assert model.phi0.shape == (4, 64)
    assert model.alpha == small_config.alpha
    assert model.scenario.limit is not None


def test_two_cluster_initial_follows_block_cut():
    config = replace(settings.load_preset("clustered"), nz=8, nx=32)
    phi = settings.build_initial(config)
    assert (phi.rows[0] == phi.rows[3]).all()
    assert not (phi.rows[3] == phi.rows[4]).all()


def test_er_family_needs_constant_graphon():
    config = replace(settings.load_preset("decay"), graph="er")
    with pytest.raises(ParameterError):
        settings.build_scenario(config, settings.build_graphon(config))


def test_step_er_graphon_keys(tmp_path):
    text = "[graphon]\ntype = step_er\np = 0.3\nN = 40\nseed = 11\n"
    config = settings.parse_config(_write(tmp_path, text))
    assert (config.graphon, config.graphon_N, config.graphon_seed) == ("step_er", 40, 11)
    W = settings.build_graphon(config)
    assert W.N == 40
    assert W.adjacency.seed == 11
    again = settings.build_graphon(config)
    assert (W.adjacency.weights == again.adjacency.weights).all()
    assert 0.0 < W.linf_l1_bound <= 1.0


def test_step_er_falls_back_to_run_seed(tmp_path):
    config = settings.parse_config(_write(tmp_path, "[run]\nseed = 4\n[graphon]\ntype = step_er\nN = 10\n"))
    assert config.graphon_seed is None
    assert settings.build_graphon(config).adjacency.seed == 4


def test_translation_xi_keys(tmp_path):
    config = settings.parse_config(_write(tmp_path, "[graphon]\ntype = translation\nxi = exp\nrate = 3.0\n"))
    W = settings.build_graphon(config)
    assert (W.profile, W.rate) == ("exp", 3.0)
    err = _error(_write(tmp_path, "[graphon]\ntype = translation\nxi = cubic\n"))
    assert err.code == "invalid_value"


def test_graphon_type_errors(tmp_path):
    err = _error(_write(tmp_path, "[graphon]\ntype = ring\n"))
    assert err.code == "unresolvable_name"
    assert err.line == 2
    assert _error(_write(tmp_path, "[graphon]\ntype = step_er\nN = 0\n")).code == "invalid_value"
    assert _error(_write(tmp_path, "[graphon]\nkind = block\n")).code == "unknown_key"

import pytest

from adaalter.config import (
    RunConfig,
    config_hash,
    emit_config,
    load_config,
    parse_config,
)
from adaalter.errors import ConfigError

GOOD_TEXT = """\
# small lazy-denominator run
algo=local_adaalter
problem=quadratic
d=4
n=8
T=50
H=4
eta=0.5
warm_up_steps=10
seed=3
"""


def test_parse_basic():
    cfg = parse_config(GOOD_TEXT)
    assert cfg.algo == "local_adaalter"
    assert cfg.H == 4
    assert cfg.eta == 0.5
    assert cfg.n == 8
    assert cfg.seed == 3
    assert cfg.sync_mode == "periodic"


def test_b0sq_defaults_per_algo():
    assert parse_config(GOOD_TEXT).b0sq == 1.0
    ada = GOOD_TEXT.replace("algo=local_adaalter", "algo=adagrad").replace("H=4", "H=1")
    assert parse_config(ada).b0sq == 0.0
    assert parse_config(GOOD_TEXT + "b0sq=2.5\n").b0sq == 2.5


def test_missing_required_key():
    text = GOOD_TEXT.replace("T=50\n", "")
    with pytest.raises(ConfigError, match="missing required key.*T"):
        parse_config(text)


def test_h_zero_message():
    with pytest.raises(ConfigError, match="H must be >= 1, got 0"):
        parse_config(GOOD_TEXT.replace("H=4", "H=0"))


def test_unknown_and_duplicate_keys_with_line_numbers():
    with pytest.raises(ConfigError, match="line 11: unknown key 'wat'"):
        parse_config(GOOD_TEXT + "wat=1\n")
    with pytest.raises(ConfigError, match="line 11: duplicate key 'eta'"):
        parse_config(GOOD_TEXT + "eta=0.1\n")


def test_malformed_line_and_values():
    with pytest.raises(ConfigError, match="line 3: expected key=value"):
        parse_config("algo=sgd\nproblem=quadratic\nnonsense\n")
    with pytest.raises(ConfigError, match="bad value for d"):
        parse_config(GOOD_TEXT.replace("d=4", "d=four"))
    with pytest.raises(ConfigError, match="bad value for dump_shards"):
        parse_config(GOOD_TEXT + "dump_shards=yes\n")


def test_comments_and_blank_lines_ignored():
    text = "\n# header\n" + GOOD_TEXT.replace("H=4", "H=4   # inline note") + "\n\n"
    assert parse_config(text).H == 4


def test_enum_validation():
    with pytest.raises(ConfigError, match="algo must be one of"):
        parse_config(GOOD_TEXT.replace("algo=local_adaalter", "algo=adam"))
    with pytest.raises(ConfigError, match="problem must be one of"):
        parse_config(GOOD_TEXT.replace("problem=quadratic", "problem=mnist"))
    with pytest.raises(ConfigError, match="sync_mode must be one of"):
        parse_config(GOOD_TEXT + "sync_mode=lazy\n")


def test_every_step_algos_require_h1():
    text = GOOD_TEXT.replace("algo=local_adaalter", "algo=adagrad")
    with pytest.raises(ConfigError, match="H must be 1"):
        parse_config(text)
    with pytest.raises(ConfigError, match="cannot use sync_mode=never"):
        parse_config(text.replace("H=4", "H=1") + "sync_mode=never\n")


def test_numeric_constraints():
    with pytest.raises(ConfigError, match="eta must be > 0"):
        parse_config(GOOD_TEXT.replace("eta=0.5", "eta=0"))
    with pytest.raises(ConfigError, match="alpha must be in"):
        parse_config(GOOD_TEXT + "alpha=1.5\n")
    with pytest.raises(ConfigError, match="n_samples.*must be >= n"):
        parse_config(GOOD_TEXT + "n_samples=4\n")
    with pytest.raises(ConfigError, match="quad_lmax >= quad_lmin"):
        parse_config(GOOD_TEXT + "quad_lmin=5.0\n")
    with pytest.raises(ConfigError, match="b0sq \\+ epssq > 0"):
        parse_config(GOOD_TEXT + "b0sq=0\nepssq=0\n")


def test_bound_hypothesis_gate():
    with pytest.raises(ConfigError, match="needs clip_rho > 0"):
        parse_config(GOOD_TEXT + "check_bound_hypotheses=1\n")
    cfg = parse_config(GOOD_TEXT + "check_bound_hypotheses=1\nclip_rho=1.0\n")
    assert cfg.check_bound_hypotheses is True
    with pytest.raises(ConfigError, match="needs b0sq >= 1"):
        parse_config(GOOD_TEXT + "check_bound_hypotheses=1\nclip_rho=1.0\nb0sq=0.5\n")


def test_emit_parse_round_trip():
    cfg = parse_config(GOOD_TEXT + "alpha=0.75\nclip_rho=2.0\ndump_shards=1\n")
    text = emit_config(cfg)
    again = parse_config(text)
    assert again == cfg
    # canonical form is a fixed point
    assert emit_config(again) == text


def test_replace_revalidates():
    cfg = parse_config(GOOD_TEXT)
    assert cfg.replace(H=8).H == 8
    with pytest.raises(ConfigError, match="H must be >= 1"):
        cfg.replace(H=-2)


def test_eta_effective_scaling():
    cfg = parse_config(GOOD_TEXT)
    assert cfg.eta_effective == 0.5
    lin = cfg.replace(lr_scale_mode="linear", lr_scale_k=4.0)
    assert lin.eta_effective == 2.0
    sq = cfg.replace(lr_scale_mode="sqrt", lr_scale_k=4.0)
    assert sq.eta_effective == 1.0


def test_config_hash_ignores_seed_and_out_dir():
    cfg = parse_config(GOOD_TEXT)
    assert config_hash(cfg) == config_hash(cfg.replace(seed=99, out_dir="elsewhere"))
    assert config_hash(cfg) != config_hash(cfg.replace(H=8))
    assert len(config_hash(cfg)) == 10


def test_load_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(GOOD_TEXT)
    assert load_config(path) == parse_config(GOOD_TEXT)

import pytest

from formcy import config
from formcy.config import ConfigError


def test_defaults():
    cfg = config.parse("")
    assert cfg.problem.background == "flat" and cfg.problem.A == 1e-2
    assert cfg.scan.A_list == (1e-1, 1e-2, 1e-3, 1e-4)
    assert cfg.verify.n_list == (3, 4) and cfg.verify.cases == 20
    assert cfg.output.snapshots is True


def test_full_parse():
    text = """
[problem]
n = 3
resolution = 16
active = 0, 1
background = perturbed-admissible
omega0 = kahler
h = calabi-yau
A = 0.05
phi_star_seed = 4

[solver]
tol = 1e-11
max_newton = 9

[scan]
A_list = 1e-1, 1e-3

[output]
directory = out
snapshots = no
report_format = text

[verify]
n_list = 3
cases = 5
sign_flip = true
"""
    cfg = config.parse(text)
    p = cfg.problem
    assert (p.n, p.resolution, p.active, p.h, p.A, p.phi_star_seed) == (3, (16,), (0, 1), "calabi-yau", 0.05, 4)
    assert cfg.solver.tol == 1e-11 and cfg.solver.max_newton == 9
    assert cfg.scan.A_list == (1e-1, 1e-3)
    assert cfg.output.snapshots is False and cfg.output.report_format == "text"
    assert cfg.verify.sign_flip is True and cfg.verify.n_list == (3,)


def test_empty_value_keeps_default():
    assert config.parse("[problem]\nphi_star_amplitude =\n").problem.phi_star_amplitude is None


@pytest.mark.parametrize(
    "text,match",
    [
        ("[bogus]\nx = 1\n", "unknown section"),
        ("[problem]\ncolour = red\n", "unknown key"),
        ("[solver]\nA = 0.1\n", r"\[problem\]"),
        ("[problem]\nn = 2\n", "at least 3"),
        ("[problem]\nresolution = 7\n", "even"),
        ("[problem]\nA = -1\n", "positive"),
        ("[problem]\nh = magic\n", "h must be"),
        ("[problem]\nh = file\n", "h_file"),
        ("[scan]\nA_list = 1e-2, 1e-1\n", "decreasing"),
        ("[output]\nreport_format = xml\n", "json or text"),
        ("[output]\nsnapshots = maybe\n", "boolean"),
        ("[verify]\ncases = 0\n", "cases"),
        ("[solver]\ntol = abc\n", "tol"),
        ("[solver]\nt_step = 2\n", "t_step"),
        ("not an ini", "header"),
    ],
)
def test_rejections(text, match):
    with pytest.raises(ConfigError, match=match):
        config.parse(text)


def test_load_missing(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        config.load(tmp_path / "nope.ini")

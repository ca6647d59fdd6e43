import numpy as np
import pytest

from edmcplots.cli import main
from edmcplots.render import FigureSpec, SchemaError, read_rows, render

PHASE = """\
# config=abc version=0.1.0 kind=phase
n,p,trials,successes,mean_re,mean_iters,mean_seconds,ref_edge
100,0.1,10,1,0.5,800.0,0.2,0.4605
100,0.3,10,8,0.01,120.0,0.2,0.4605
100,0.6,10,10,1e-08,60.0,0.2,0.4605
500,0.1,10,6,0.1,400.0,1.0,0.1243
500,0.3,10,10,1e-08,90.0,1.0,0.1243
500,0.6,10,10,1e-09,50.0,1.0,0.1243
"""

PERTURB = """\
p,sigma_n,trials,successes,mean_re,delta0_sq_over_sigmar
0.2,0.0,5,5,1e-09,0.0
0.2,0.5,5,3,0.01,1.2
0.5,0.0,5,5,1e-09,0.0
0.5,0.5,5,5,1e-08,1.2
"""

TRAJ_ORACLE = "iter,g1,g2,r,dist,eta\n" + "\n".join(
    f"{k},{10.0 ** (-0.02 * k)},{10.0 ** (-0.02 * k)},{10.0 ** (-0.03 * k)},"
    f"{10.0 ** (-0.03 * k)},0.5"
    for k in range(60)
)

TRAJ_BLIND = "iter,g1,g2,r,dist,eta\n" + "\n".join(
    f"{k},{10.0 ** (-0.05 * k)},,,,0.5" for k in range(40)
)

PROTEIN = """\
protein,n,mu,kappa,p,mean_re
1AX8,1003,1.87,2.95,0.01,0.8
1AX8,1003,1.87,2.95,0.05,0.001
1KDH,2846,2.4,3.1,0.01,0.9
1KDH,2846,2.4,3.1,0.05,0.01
"""


def _write(tmp_path, text, name="in.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestRenderers:
    @pytest.mark.parametrize(
        "kind,text",
        [
            ("phase", PHASE),
            ("perturb", PERTURB),
            ("trajectory", TRAJ_ORACLE),
            ("trajectory", TRAJ_BLIND),
            ("protein", PROTEIN),
        ],
    )
    def test_produces_image(self, tmp_path, kind, text):
        out = tmp_path / f"{kind}.png"
        render(_write(tmp_path, text), str(out), FigureSpec(kind=kind))
        assert out.exists() and out.stat().st_size > 1000

    def test_phase_color_scale_spans_unit_interval(self, tmp_path, monkeypatch):
        captured = {}
        import edmcplots.render as mod

        real_imshow = None

        def grab(ax_imshow):
            def wrapper(self, *a, **kw):
                captured.update({"vmin": kw.get("vmin"), "vmax": kw.get("vmax")})
                return ax_imshow(self, *a, **kw)

            return wrapper

        import matplotlib.axes

        real_imshow = matplotlib.axes.Axes.imshow
        monkeypatch.setattr(matplotlib.axes.Axes, "imshow", grab(real_imshow))
        out = tmp_path / "p.png"
        render(_write(tmp_path, PHASE), str(out), FigureSpec(kind="phase"))
        assert captured == {"vmin": 0.0, "vmax": 1.0}

    def test_trajectory_is_log_scaled(self, tmp_path, monkeypatch):
        scales = []
        import matplotlib.axes

        real = matplotlib.axes.Axes.semilogy

        def wrapper(self, *a, **kw):
            scales.append(True)
            return real(self, *a, **kw)

        monkeypatch.setattr(matplotlib.axes.Axes, "semilogy", wrapper)
        render(
            _write(tmp_path, TRAJ_ORACLE), str(tmp_path / "t.png"),
            FigureSpec(kind="trajectory"),
        )
        assert scales  # at least one log-scaled series drawn


class TestSchemaErrors:
    def test_missing_column_named(self, tmp_path):
        bad = PHASE.replace("successes", "wins")
        with pytest.raises(SchemaError, match="successes"):
            render(_write(tmp_path, bad), str(tmp_path / "x.png"), FigureSpec("phase"))

    def test_empty_csv(self, tmp_path):
        with pytest.raises(SchemaError, match="no data rows"):
            read_rows(_write(tmp_path, "# only a comment\n"), ())

    def test_header_only(self, tmp_path):
        text = "n,p,trials,successes\n"
        with pytest.raises(SchemaError, match="no data rows"):
            render(_write(tmp_path, text), str(tmp_path / "x.png"), FigureSpec("phase"))

    def test_unknown_kind(self):
        with pytest.raises(SchemaError, match="unknown kind"):
            FigureSpec(kind="scatterplot")

    def test_non_numeric_value(self, tmp_path):
        bad = PROTEIN.replace("0.8", "oops", 1)
        with pytest.raises(SchemaError, match="non-numeric"):
            render(_write(tmp_path, bad), str(tmp_path / "x.png"), FigureSpec("protein"))


class TestCli:
    def test_render_roundtrip(self, tmp_path, capsys):
        out = tmp_path / "phase.png"
        code = main([
            "render", "--kind", "phase",
            "--in", _write(tmp_path, PHASE), "--out", str(out),
        ])
        assert code == 0 and out.exists()
        assert str(out) in capsys.readouterr().out

    def test_bad_input_exits_two(self, tmp_path, capsys):
        code = main([
            "render", "--kind", "phase",
            "--in", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o.png"),
        ])
        assert code == 2
        assert "error:" in capsys.readouterr().err

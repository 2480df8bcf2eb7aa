"""Smoke test of the ddpgd Python bindings.

Build the extension first:

    cargo build --release -p ddpgd-python

then run `python3 python/smoke_test.py` from the repository root.
"""

import importlib.util
import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load_extension(workdir):
    for name in ("libddpgd_py.so", "libddpgd_py.dylib", "ddpgd_py.dll"):
        built = ROOT / "target" / "release" / name
        if built.exists():
            target = workdir / ("ddpgd_py.pyd" if name.endswith(".dll") else "ddpgd_py.so")
            shutil.copy(built, target)
            spec = importlib.util.spec_from_file_location("ddpgd_py", target)
            module = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(module)
            return module
    sys.exit("extension not built; run `cargo build --release -p ddpgd-python`")


def coarse_config(workdir):
    text = (ROOT / "configs" / "test1.toml").read_text()
    text = text.replace("mu = 1e-2\nlambda = 1e-1", "mu = 1.0\nlambda = 1.0")
    path = workdir / "test1_coarse.toml"
    path.write_text(text)
    return path


def main():
    with tempfile.TemporaryDirectory() as tmp:
        workdir = pathlib.Path(tmp)
        ddpgd = load_extension(workdir)

        assert ddpgd.exact_test1(7.0, 0.0, 0.3) == 0.0
        assert abs(ddpgd.exact_test1(2.0, 0.5, 0.5) - 0.1875) < 1e-14

        config = coarse_config(workdir)
        out = workdir / "run"
        models = ddpgd.offline(str(config), str(out))
        assert [m[0] for m in models] == ["omega1", "omega2"], models
        assert all(m[3] <= m[2] for m in models)

        runs = ddpgd.online(str(config), str(out), [[3.0], [30.0]])
        for run in runs:
            assert run["converged"], run
            assert run["unknowns"] == 38, run
            assert math.isfinite(run["error"]) and run["error"] < 5e-2, run

        rows = ddpgd.compare(str(config), str(out), [[10.0]])
        assert rows[0]["ddfem_error"] < 1e-2, rows
        assert (out / "compare.csv").exists()

        model = ddpgd.Surrogate.load(str(out / "surrogates"), "omega1")
        lam = [0.5] * len(model.interface_dofs)
        u = model.evaluate([3.0], lam)
        assert len(u) == model.n_nodes
        assert all(abs(u[q] - 0.5) < 1e-12 for q in model.interface_dofs)

        try:
            ddpgd.online(str(config), str(out), [[500.0]])
        except ValueError:
            pass
        else:
            raise AssertionError("out-of-range point accepted")

        print(f"{model!r}")
        print("python smoke test passed")


if __name__ == "__main__":
    main()

"""Build the extension with cargo, import it and exercise the main calls.

Usage: python3 python/smoke_test.py
"""

import cmath
import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def build_module(dest: pathlib.Path) -> None:
    subprocess.run(
        ["cargo", "build", "--release", "-p", "extended-crlb-py"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "release" / "libextended_crlb_py.so"
    shutil.copy(lib, dest / "extended_crlb.so")


def main() -> int:
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        build_module(tmp)
        sys.path.insert(0, str(tmp))
        import extended_crlb as ec

        chirp = ec.WaveformSpec.chirp(2.56e9, 5e-5)
        params = chirp.effective_params()
        assert abs(params["bandwidth"] / 9.0884e5 - 1) < 1e-3, params
        assert abs(params["time_bandwidth"] / 35.3786 - 1) < 5e-3, params

        gamma = 1 / 1.06
        scene = ec.TargetScene(2e-4, gamma, 6.25e-8, [1, 1, 1, 1], chirp.duration)
        assert len(scene) == 4
        n0 = ec.n0_for_snr(scene, chirp, 20.0)
        bound = ec.crlb(scene, chirp, n0)
        assert bound["crlb_tau"] > 0 and bound["crlb_gamma"] > 0
        fd = ec.crlb_finite_difference(scene, chirp, n0)
        assert abs(fd["crlb_tau"] / bound["crlb_tau"] - 1) < 0.01

        single = ec.TargetScene(2e-4, gamma, 6.25e-8, [1], chirp.duration)
        one = ec.crlb(single, chirp, ec.n0_for_snr(single, chirp, 20.0))
        assert one["crlb_tau"] <= bound["crlb_tau"]

        rows = ec.truncation_decay(scene, chirp, n0, [1, 2, 3, 4])
        assert [r["order"] for r in rows] == [1, 2, 3, 4]

        clean = ec.noiseless_echo(single, chirp)
        est = ec.estimate("wbaf", clean, 6.25e-8, chirp, 2e-4 + 6.25e-8, gamma * 1.001)
        assert abs(est["tau"] - 2e-4) < 0.05 * 6.25e-8, est
        assert abs(est["gamma"] - gamma) < 1e-5, est

        noisy_a = ec.synthesize_echo(single, chirp, n0, seed=5, stream=2)
        noisy_b = ec.synthesize_echo(single, chirp, n0, seed=5, stream=2)
        assert noisy_a == noisy_b
        assert all(not cmath.isnan(v) for v in noisy_a)

        names = [n for n, _ in ec.list_scenarios()]
        assert "fig-p-sweep" in names and "fig-mse-p4" in names

        try:
            ec.WaveformSpec.chirp(1e9, -1.0)
        except ec.CrlbError as e:
            assert e.args[0] == "invalid-parameter"
        else:
            raise AssertionError("negative duration accepted")

        print(
            "smoke ok: B = %.5e rad/s, crlb_tau(P=4, 20 dB) = %.4e s^2, sqrt = %.3f samples"
            % (params["bandwidth"], bound["crlb_tau"], math.sqrt(bound["crlb_tau"]) / 6.25e-8)
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())

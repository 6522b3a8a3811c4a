"""Smoke test for the filtered_fock Python extension.

Builds the cdylib with cargo if needed, imports it, and exercises the main
entry points: grid facts, exponential inner products, the Itô table and a
small end-to-end scenario run.
"""

import json
import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def build_and_import():
    subprocess.run(
        ["cargo", "build", "--release", "-p", "filtered-fock-py"],
        cwd=ROOT,
        check=True,
    )
    libname = {
        "linux": "libfiltered_fock.so",
        "darwin": "libfiltered_fock.dylib",
    }.get(sys.platform, "libfiltered_fock.so")
    built = ROOT / "target" / "release" / libname
    stage = pathlib.Path(tempfile.mkdtemp(prefix="filtered_fock_py"))
    shutil.copy(built, stage / "filtered_fock.so")
    sys.path.insert(0, str(stage))
    import filtered_fock

    return filtered_fock


def main():
    ff = build_and_import()

    # basis enumeration: d = 24 modes, cutoff 3 -> 1 + 24 + 300 + 2600
    assert ff.fock_dim(1.0, 8, 3, 3) == 2925, ff.fock_dim(1.0, 8, 3, 3)

    # truncated exponential inner product = partial sum of exp(<u,v>)
    dt = 1.0 / 8.0
    amp = 0.5 / math.sqrt(dt)  # orthonormal-mode amplitude 0.5
    u = [(0, 1, amp, 0.0)]
    re, im = ff.exponential_inner(1.0, 8, 3, 3, u, u)
    expected = 1.0 + 0.25 + 0.25**2 / 2 + 0.25**3 / 6
    assert abs(re - expected) < 1e-12 and abs(im) < 1e-14, (re, im)

    # orthogonal one-particle vectors give 1 within the truncation
    v = [(1, 2, amp, 0.0)]
    re, im = ff.exponential_inner(1.0, 8, 3, 3, u, v)
    assert abs(re - 1.0) < 1e-12 and abs(im) < 1e-14

    dump = ff.dump_exponential(1.0, 4, 1, 2, [(0, 1, 1.0, 0.0)])
    assert dump.splitlines()[0].startswith("0 | []"), dump.splitlines()[0]

    table = ff.ito_table("boson")
    assert "dT" in table and "dA1dA2" in table
    assert "IP0" in ff.ito_table("mfree:2")

    scenario = """
grid T=1 cells=4 colors=2 nmax=2 h0=1
mat C = [(0,0,0.3,-0.2)]
biproc X = [I | {1}] ⊗ [I | FULL] on (0)
sde S {
  p0 = {1}, FULL
  init FULL = C
  coeff dA*(1) : [C | {1}] ⊗ [I | FULL]
  coeff dT : [C | FULL] ⊗ [I | FULL]
  tol = 1e-9
  maxiter = 40
}
task oracle X dA(1) t=1 n=3
task adapted X t=0.5
task solve S t=1
task ito-table boson
"""
    code, report = ff.run_scenario(scenario, 7, "json")
    assert code == 0, report
    parsed = json.loads(report)
    assert parsed["schema"] == 1 and parsed["summary"]["failed"] == 0

    # determinism: identical text and seed give identical bytes
    code2, report2 = ff.run_scenario(scenario, 7, "json")
    assert (code, report) == (code2, report2)

    # parse errors surface as exit code 2 with a diagnostic
    code, diag = ff.run_scenario("grid T=1 cells=4 colors=2 nmax=2 h0=1\nbogus\n", 0, "json")
    assert code == 2 and "E001" in diag, (code, diag)

    print("filtered_fock smoke test: OK")


if __name__ == "__main__":
    main()

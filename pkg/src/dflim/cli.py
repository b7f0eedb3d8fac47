"""Command-line frontend: calibrate, monitor, simulate, arl-table, selftest.

Exit codes: 0 success, 1 detection-domain error (infeasible calibration,
degenerate variance, ...), 2 I/O or parse error. Every run writes a manifest
JSON next to its primary output so results are reproducible.
"""

import datetime
import json
import sys

import click
import numpy as np

from . import calibration, cusum, harness, io, plotting, preprocess, simulate
from .errors import DflimError, InvalidInput, ParseError

EXIT_DOMAIN = 1
EXIT_IO = 2


def _write_manifest(out_path, subcommand, **fields):
    manifest = {
        "subcommand": subcommand,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        **fields,
    }
    with open(str(out_path) + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)


def _fail(exc):
    click.echo(f"error: {exc}", err=True)
    code = EXIT_IO if isinstance(exc, (ParseError, OSError)) else EXIT_DOMAIN
    sys.exit(code)


def _load_frames(path, fmt):
    try:
        return io.read_frames(path, fmt)
    except (ParseError, OSError) as exc:
        _fail(exc)


def _preprocess(frames, diff, patch_side):
    if patch_side:
        frames = [preprocess.patch_transform(f, patch_side) for f in frames]
    if diff:
        frames = preprocess.diff_frames(frames)
    return frames


@click.group()
def main():
    """Distribution-free CUSUM monitoring for low-rank matrix time series."""


@main.command("calibrate")
@click.option("--input", "input_path", required=True, help="In-control sequence file.")
@click.option("--format", "fmt", default="mseq", type=click.Choice(["mseq", "csvdir"]))
@click.option("--m0", "m0_path", default=None,
              help="Optional known in-control mean (MSEQ with one frame).")
@click.option("--q", default=0.9, show_default=True,
              help="Squared-energy fraction for rank selection.")
@click.option("--c", default=calibration.DEFAULT_C, show_default=True,
              help="Drift allowance constant.")
@click.option("--target-arl0", default=200.0, show_default=True)
@click.option("--batch-m", default=calibration.DEFAULT_BATCH_M, show_default=True,
              help="Batch size for the long-run variance estimator.")
@click.option("--diff", is_flag=True, help="Difference consecutive frames first.")
@click.option("--patch-side", type=int, default=None,
              help="Apply the patch transform with this tile side first. "
                   "Tiles scan row-major; each tile vectorizes column-major.")
@click.option("--out", "out_path", required=True, help="Output calibration JSON.")
def cmd_calibrate(input_path, fmt, m0_path, q, c, target_arl0, batch_m, diff,
                  patch_side, out_path):
    """Run the setup phase on in-control data and write a dflim-cal-v1 JSON."""
    frames = _load_frames(input_path, fmt)
    try:
        frames = _preprocess(frames, diff, patch_side)
        m0 = None
        if m0_path is not None:
            m0_frames = io.read_mseq(m0_path)
            if len(m0_frames) != 1:
                raise InvalidInput("--m0 file must contain exactly one frame")
            m0 = _preprocess([m0_frames[0]], False, patch_side)[0]
        model, params = calibration.calibrate(
            frames, m0_override=m0, q=q, c=c, target_arl0=target_arl0, batch_m=batch_m
        )
        calibration.save_calibration(model, params, out_path)
    except DflimError as exc:
        _fail(exc)
    _write_manifest(out_path, "calibrate", input=input_path, format=fmt,
                    q=q, c=c, target_arl0=target_arl0, batch_m=batch_m,
                    diff=diff, patch_side=patch_side, n_frames=len(frames))
    click.echo(
        f"calibrated: r={model.basis.r}, sigma_T={params.sigma_t:.4f}, "
        f"Omega0^2={params.omega0_sq:.4f}, H={params.control_limit_h:.4f}"
    )


@main.command("monitor")
@click.option("--cal", "cal_path", required=True, help="Calibration JSON.")
@click.option("--input", "input_path", required=True, help="Sequence file.")
@click.option("--format", "fmt", default="mseq", type=click.Choice(["mseq", "csvdir"]))
@click.option("--no-restart", is_flag=True, help="Stop at the first alarm.")
@click.option("--diff", is_flag=True, help="Difference consecutive frames first.")
@click.option("--patch-side", type=int, default=None,
              help="Apply the patch transform with this tile side first.")
@click.option("--out-prefix", required=True,
              help="Prefix for trace CSV, alarms CSV, and the trace figure.")
@click.option("--figures/--no-figures", default=True, show_default=True)
def cmd_monitor(cal_path, input_path, fmt, no_restart, diff, patch_side,
                out_prefix, figures):
    """Stream a sequence through the monitor; write trace and alarm CSVs."""
    try:
        model, params = calibration.load_calibration(cal_path)
    except (DflimError, OSError, json.JSONDecodeError, KeyError) as exc:
        _fail(ParseError(f"{cal_path}: {exc}"))
    frames = _load_frames(input_path, fmt)
    trace_rows = []

    def trace(t, t_stat, s, alarmed):
        trace_rows.append((t, t_stat, s, int(alarmed)))

    try:
        frames = _preprocess(frames, diff, patch_side)
        if no_restart:
            alarm = cusum.run(iter(frames), model, params, trace=trace)
            alarms = [alarm] if alarm is not None else []
        else:
            alarms = cusum.run_with_restart(iter(frames), model, params, trace=trace)
    except DflimError as exc:
        _fail(exc)
    trace_path = out_prefix + ".trace.csv"
    with open(trace_path, "w") as fh:
        fh.write(f"# drift={params.drift!r}\n")
        fh.write(f"# H={params.control_limit_h!r}\n")
        fh.write("t,t_stat,s,alarm\n")
        for t, t_stat, s, alarmed in trace_rows:
            fh.write(f"{t},{t_stat!r},{s!r},{alarmed}\n")
    alarms_path = out_prefix + ".alarms.csv"
    with open(alarms_path, "w") as fh:
        fh.write("time,s_at_alarm\n")
        for a in alarms:
            fh.write(f"{a.time},{a.s_at_alarm!r}\n")
    if figures:
        plotting.save_trace_figure(
            [r[0] for r in trace_rows],
            [r[2] for r in trace_rows],
            params.control_limit_h,
            out_prefix + ".trace.png",
            alarms=[a.time for a in alarms],
        )
    _write_manifest(out_prefix, "monitor", cal=cal_path, input=input_path,
                    format=fmt, no_restart=no_restart, diff=diff,
                    patch_side=patch_side, n_alarms=len(alarms))
    click.echo(f"{len(alarms)} alarm(s); trace written to {trace_path}")


@main.command("simulate")
@click.option("--scenario", "scn_path", required=True, help="dflim-scn-v1 JSON.")
@click.option("--shift-at", type=int, default=None,
              help="Frame index (1-based) where the shift starts.")
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--rep", type=int, default=0, show_default=True,
              help="Replication stream index.")
@click.option("--out", "out_path", required=True, help="Output MSEQ file.")
@click.option("--figures/--no-figures", default=True, show_default=True)
def cmd_simulate(scn_path, shift_at, seed, rep, out_path, figures):
    """Generate a synthetic sequence and write it in MSEQ format."""
    try:
        cfg = simulate.load_scenario(scn_path)
        if seed is not None:
            cfg = simulate.with_seed(cfg, seed)
        frames = list(simulate.generate_sequence(cfg, shift_at=shift_at, rep=rep))
        io.write_mseq(frames, out_path)
    except (ParseError, OSError) as exc:
        _fail(exc)
    except DflimError as exc:
        _fail(exc)
    if figures:
        plotting.save_frame_figure(
            simulate.background_matrix(cfg.background, cfg.p1, cfg.p2),
            out_path + ".background.png", title="in-control mean")
        if cfg.shift != "none":
            plotting.save_frame_figure(
                simulate.shift_matrix(cfg.shift, cfg.p1, cfg.p2, cfg.shift_amplitude),
                out_path + ".shift.png", title=f"shift: {cfg.shift}")
        plotting.save_frame_figure(frames[0], out_path + ".frame1.png",
                                   title="first frame")
    _write_manifest(out_path, "simulate", scenario=scn_path, shift_at=shift_at,
                    seed=cfg.seed, rep=rep, n_frames=len(frames))
    click.echo(f"wrote {len(frames)} frames to {out_path}")


@main.command("arl-table")
@click.option("--scenario", "scn_path", required=True,
              help="Base in-control scenario JSON.")
@click.option("--shifts", default="none,sparse,ring,sine,chessboard",
              show_default=True, help="Comma-separated shift kinds to evaluate.")
@click.option("--shift-at", type=int, default=1, show_default=True)
@click.option("--n-reps", default=300, show_default=True)
@click.option("--max-len", default=800, show_default=True)
@click.option("--n-train", default=400, show_default=True)
@click.option("--q", default=0.9, show_default=True)
@click.option("--c", default=calibration.DEFAULT_C, show_default=True)
@click.option("--target-arl0", default=200.0, show_default=True)
@click.option("--base-seed", type=int, default=0, show_default=True)
@click.option("--out-prefix", required=True,
              help="Prefix for the grid CSV, seed sidecar, and figure.")
@click.option("--figures/--no-figures", default=True, show_default=True)
def cmd_arl_table(scn_path, shifts, shift_at, n_reps, max_len, n_train, q, c,
                  target_arl0, base_seed, out_prefix, figures):
    """Estimate run lengths over a grid of shift patterns."""
    try:
        base = simulate.load_scenario(scn_path)
        cells = []
        for kind in [s.strip() for s in shifts.split(",") if s.strip()]:
            scn = simulate.ScenarioConfig(
                p1=base.p1, p2=base.p2, background=base.background,
                shift=kind, noise=base.noise, temporal=base.temporal,
                length=max_len, seed=base.seed,
                shift_amplitude=base.shift_amplitude,
            )
            cells.append(harness.GridCell(
                label=kind,
                scenario=scn,
                shift_at=None if kind == "none" else shift_at,
            ))
        report = harness.run_grid(
            cells, n_reps=n_reps, max_len=max_len, base_seed=base_seed,
            calib_kwargs={"n_train": n_train, "q": q, "c": c,
                          "target_arl0": target_arl0},
        )
    except (ParseError, OSError) as exc:
        _fail(exc)
    except DflimError as exc:
        _fail(exc)
    csv_path = out_prefix + ".grid.csv"
    report.write_csv(csv_path)
    with open(out_prefix + ".grid.json", "w") as fh:
        json.dump({"base_seed": base_seed, "scenario_seed": base.seed,
                   "n_reps": n_reps, "max_len": max_len,
                   "version": "dflim-0.1.0"}, fh, indent=2)
    if figures:
        plotting.save_grid_figure(report, out_prefix + ".grid.png")
    _write_manifest(out_prefix, "arl-table", scenario=scn_path, shifts=shifts,
                    n_reps=n_reps, max_len=max_len, base_seed=base_seed)
    for row in report.rows:
        if row.estimate is None:
            click.echo(f"{row.label}: FAILED ({row.error})")
        else:
            click.echo(
                f"{row.label}: mean RL {row.estimate.mean_rl:.2f} "
                f"({row.estimate.std_err:.3f}), censored "
                f"{row.estimate.n_censored}/{row.estimate.n_reps}"
            )
    click.echo(f"grid written to {csv_path}")


@main.command("selftest")
def cmd_selftest():
    """Quick closed-form checks of the numerical kernels."""
    from . import diagnostics, features, linalg

    checks = []

    def check(name, ok):
        checks.append((name, bool(ok)))
        click.echo(f"{'PASS' if ok else 'FAIL'}  {name}")

    s = linalg.svd(np.eye(3), 3).s
    check("svd identity singular values", np.allclose(s, 1.0))
    a, b = np.array([2.0, 0.0]), np.array([0.0, 3.0])
    check("svd rank-1 norm product",
          abs(linalg.svd(np.outer(a, b), 1).s[0] - 6.0) < 1e-12)
    l = linalg.cholesky_spd(np.array([[4.0, 2.0], [2.0, 5.0]]))
    check("cholesky 2x2", np.allclose(l, [[2.0, 0.0], [1.0, 2.0]]))
    check("solve identity", np.allclose(
        linalg.solve_spd(np.eye(2), np.array([1.0, 2.0])), [1.0, 2.0]))
    check("normal cdf at 0", abs(linalg.std_normal_cdf(0.0) - 0.5) < 1e-15)
    board = simulate.chessboard_mean(100, 200)
    check("chessboard corner values",
          board[0, 10] == 0.1 and board[5, 0] == -0.1)
    check("chessboard rank two",
          np.linalg.svd(board, compute_uv=False)[2] < 1e-10)
    check("tri-diagonal cov dim 3", np.allclose(
        simulate.make_cov(simulate.CovSpec("tri_diagonal", 3)),
        [[1, 0.3, 0], [0.3, 1, 0.3], [0, 0.3, 1]]))
    check("exp transform at 0",
          abs(simulate.exp_transform(np.zeros((1, 1)))[0, 0] - np.log(2.0)) < 1e-12)
    cfg = cusum.MonitorConfig(drift=1.0, control_limit_h=10.0)
    st, alarm = cusum.step(cusum.MonitorState(s=8.0, t=0), 4.0, cfg)
    check("cusum one-step crossing", alarm is not None and st.s == 11.0)
    check("arl zero-drift branch",
          diagnostics.arl_approx(diagnostics.ArlInputs(h=10.0, d_t=0.0, omega_sq=4.0))
          == 25.0)
    i2 = np.eye(2)
    d1, d2, d3 = diagnostics.delta_decomposition(diagnostics.BlockCov(
        sigma_beta=i2, p=np.zeros((2, 2)), sigma_gamma=i2,
        p_tilde=np.zeros((2, 2)), sigma_gamma_tilde=i2,
        delta_beta=np.zeros(2), delta_gamma=np.array([3.0, 4.0])))
    check("delta decomposition identity case",
          abs(d1) < 1e-12 and abs(d2) < 1e-12 and abs(d3 - 25.0) < 1e-12)
    failed = [name for name, ok in checks if not ok]
    if failed:
        click.echo(f"{len(failed)} check(s) failed", err=True)
        sys.exit(EXIT_DOMAIN)
    click.echo(f"all {len(checks)} checks passed")


if __name__ == "__main__":
    main()

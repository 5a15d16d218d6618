"""``darbsplat`` command line: six experiment subcommands writing CSV/PPM artifacts."""

from __future__ import annotations

import sys
from pathlib import Path


from . import __version__
from .calibration import PSI_TABLE, estimate_psi, published_psi, psi_sensitivity
from .config import MANIFEST_NAME, SUBCOMMANDS, RunConfig, parse_config
from .errors import DarbsError, UsageError, exit_code
from .kernel import preset
from .io import read_cameras, read_image, read_scene, write_csv, write_float_dump, write_ppm, write_scene
from .fit.report import REPORT_HEADER

PSI_TOLERANCE = 0.05


class GradientCheckFailed(DarbsError, ArithmeticError):
    kind = "gradient-check"


def kernel_of(cfg: RunConfig):
    return preset(cfg["kernel"], cfg["beta"], cfg["xi"], cfg["lobes"])


def psi_of(cfg: RunConfig, key="psi"):
    value = cfg[key]
    if value != "auto":
        return float(value)
    spec = kernel_of(cfg)
    base = spec.name
    if spec != preset(base) or base not in PSI_TABLE:
        raise UsageError(f"{key} = auto needs an unmodified preset; give {key} explicitly")
    return PSI_TABLE[base][0]


def _scene_and_cameras(cfg: RunConfig):
    from .demo import load_demo

    scene = cameras = None
    if cfg["scene"] == "demo" or cfg["cameras"] == "demo":
        scene, cameras = load_demo()
    if cfg["scene"] != "demo":
        scene = read_scene(cfg["scene"])
    if cfg["cameras"] != "demo":
        cameras = read_cameras(cfg["cameras"])
    return scene, cameras


def _write_views(out_dir: Path, images, stem="view"):
    for k, img in enumerate(images):
        write_ppm(out_dir / f"{stem}_{k}.ppm", img)
        write_float_dump(out_dir / f"{stem}_{k}.dsfl", img)


def cmd_calibrate(cfg: RunConfig, out_dir: Path):
    spec = kernel_of(cfg)
    est = estimate_psi(spec, cfg["trials"], cfg["grid"], (cfg["eig_lo"], cfg["eig_hi"]),
                       cfg["seed"], cfg["axis"], workers=cfg.threads)
    write_csv(out_dir / cfg["out"], ("kernel", "beta", "xi", "lobes", "psi", "std", "trials", "grid_n"),
              [(est.kernel, est.beta, est.xi, est.lobes, est.psi, est.std, est.trials, cfg["grid"])])
    ref = published_psi(spec.name) if spec == preset(spec.name) else None
    print(f"psi = {est.psi:.5f} +- {est.std:.5f} over {est.trials - est.aborted} trials")
    if ref is not None and abs(est.psi - ref) > PSI_TOLERANCE:
        rows = psi_sensitivity(spec, seed=cfg["seed"])
        write_csv(out_dir / "sensitivity.csv", ("eig_lo", "eig_hi", "psi", "std"), rows)
        print(f"psi differs from the reference {ref} by more than {PSI_TOLERANCE}; "
              f"wrote sensitivity.csv")


def cmd_fit1d(cfg: RunConfig, out_dir: Path):
    from .fit.mixture import MixtureConfig, fit_mixture, gen_signal, mixture_eval

    spec = kernel_of(cfg)
    target = gen_signal(cfg["target"], cfg["samples"], cfg["target_seed"])
    report, mix = fit_mixture(target, spec, cfg["n"], MixtureConfig(cfg["iters"], cfg["lr"], cfg["seed"]))
    write_csv(out_dir / cfg["out"], REPORT_HEADER, report.rows())
    write_csv(out_dir / "components.csv", ("position", "sigma", "amplitude"),
              zip(mix.position, mix.sigma, mix.amplitude))
    write_csv(out_dir / "signal.csv", ("x", "target", "fit"),
              zip(target.grid, target.values, mixture_eval(mix, target.grid)))
    print(f"final mse {report.final_mse:.3e}")


def cmd_gradcheck(cfg: RunConfig, out_dir: Path):
    from .gradcheck import run_suite

    results = run_suite(cfg["kernels"].split(","), cfg["seed"], cfg["samples"])
    write_csv(out_dir / cfg["out"], ("check", "kernel", "max_rel_err", "checked", "skipped", "tol", "pass"),
              [(r.name, r.kernel, r.max_rel_err, r.checked, r.skipped, r.tol, r.ok) for r in results])
    bad = [r for r in results if not r.ok]
    for r in results:
        print(f"{r.name:10s} {r.kernel:20s} {r.max_rel_err:.3e} {'ok' if r.ok else 'FAIL'}")
    if bad:
        raise GradientCheckFailed(f"{len(bad)} gradient checks above tolerance")


def cmd_render(cfg: RunConfig, out_dir: Path):
    from .fit.scene import render_scene
    from .geometry import project_scene

    spec = kernel_of(cfg)
    psi = psi_of(cfg)
    scene, cameras = _scene_and_cameras(cfg)
    images, rows = [], []
    for k, cam in enumerate(cameras):
        img = render_scene(scene, cam, spec, psi, cfg["background"])
        proj = project_scene(scene, cam, spec, psi)
        images.append(img)
        rows.append((k, cam.width, cam.height, len(proj.visible), len(scene) - len(proj.visible),
                     *img.rgb.reshape(-1, 3).mean(0)))
    _write_views(out_dir, images)
    write_csv(out_dir / cfg["out"], ("view", "width", "height", "visible", "culled",
                                     "mean_r", "mean_g", "mean_b"), rows)


def _fit_config(cfg: RunConfig):
    from .fit.image import FitConfig

    return FitConfig(lam=cfg["lam"], lr_position=cfg["lr_position"], lr_scale=cfg["lr_scale"],
                     lr_rotation=cfg["lr_rotation"], lr_opacity=cfg["lr_opacity"],
                     lr_color=cfg["lr_color"], iters=cfg["iters"], seed=cfg["seed"],
                     lr_final_ratio=cfg["lr_final_ratio"])


def cmd_fit_image(cfg: RunConfig, out_dir: Path):
    from .fit.image import fit_image, smooth_target

    target = smooth_target() if cfg["target"] == "smooth" else read_image(cfg["target"])
    report, img = fit_image(target, kernel_of(cfg), cfg["n"], _fit_config(cfg))
    write_csv(out_dir / cfg["out"], REPORT_HEADER, report.rows())
    write_ppm(out_dir / "fit.ppm", img)
    write_float_dump(out_dir / "fit.dsfl", img)
    print(f"final psnr {report.final_psnr:.2f} dB")


def cmd_fit_scene(cfg: RunConfig, out_dir: Path):
    from .fit.scene import fit_scene, perturb_scene, render_scene

    spec = kernel_of(cfg)
    scene, cameras = _scene_and_cameras(cfg)
    fc = _fit_config(cfg)
    fc.background = cfg["background"]
    if cfg["targets"] == "render":
        tpsi = psi_of(cfg, "target_psi")
        targets = [render_scene(scene, cam, spec, tpsi, fc.background) for cam in cameras]
    else:
        paths = cfg["targets"].split(",")
        if len(paths) != len(cameras):
            raise UsageError(f"{len(paths)} target images for {len(cameras)} cameras")
        targets = [read_image(p) for p in paths]
    init = perturb_scene(scene, cfg["seed"]) if cfg["perturb"] else scene
    report, fitted = fit_scene(init, cameras, targets, spec, psi_of(cfg), fc)
    write_csv(out_dir / cfg["out"], REPORT_HEADER, report.rows())
    write_csv(out_dir / "views.csv", ("view", "psnr"), enumerate(report.per_view_psnr))
    write_scene(out_dir / "fitted_scene.txt", fitted)
    _write_views(out_dir, [render_scene(fitted, c, spec, psi_of(cfg), fc.background) for c in cameras])
    print(f"final psnr {report.final_psnr:.2f} dB "
          f"(views: {', '.join(f'{p:.2f}' for p in report.per_view_psnr)})")


COMMANDS = {
    "calibrate": cmd_calibrate,
    "fit1d": cmd_fit1d,
    "gradcheck": cmd_gradcheck,
    "render": cmd_render,
    "fit-image": cmd_fit_image,
    "fit-scene": cmd_fit_scene,
}


def write_manifest(cfg: RunConfig, out_dir: Path):
    lines = [f"# darbsplat {__version__}; rerun with: darbsplat --config {MANIFEST_NAME}"]
    lines += cfg.manifest_lines()
    (out_dir / MANIFEST_NAME).write_text("\n".join(lines) + "\n")


def resolve(cfg: RunConfig) -> RunConfig:
    """Replace ``auto`` values by what they stand for, so the manifest is self-contained."""
    if cfg.values.get("psi") == "auto":
        cfg.values["psi"] = psi_of(cfg)
    if cfg.values.get("target_psi") == "auto" and cfg.values.get("targets") == "render":
        cfg.values["target_psi"] = psi_of(cfg, "target_psi")
    cfg.values["threads"] = cfg.threads
    return cfg


def run(cfg: RunConfig) -> int:
    cfg = resolve(cfg)
    out_dir = cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(cfg, out_dir)
    COMMANDS[cfg.subcommand](cfg, out_dir)
    return 0


def version_text():
    lines = [f"darbsplat {__version__}", "default psi (kernel, psi, provenance):"]
    for name, (psi, source) in PSI_TABLE.items():
        lines.append(f"  {name:24s} {psi:<8g} {source}")
    return "\n".join(lines)


def _error_line(exc: BaseException) -> str:
    kind = getattr(exc, "kind", "io" if isinstance(exc, OSError) else "error")
    msg = " ".join(str(exc).split())
    return f"darbsplat: error kind={kind} class={type(exc).__name__} exit={exit_code(exc)}: {msg}"


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "--version":
        print(version_text())
        return 0
    if not argv or argv[0] in ("-h", "--help"):
        print("usage: darbsplat {" + ",".join(SUBCOMMANDS) + "} [options] | --config FILE | --version")
        return 0 if argv else 1
    try:
        cfg = parse_config(argv)
        return run(cfg)
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except (DarbsError, OSError) as exc:
        print(_error_line(exc), file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())

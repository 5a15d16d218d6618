"""Run configuration: option tables, ``key = value`` files and flag parsing."""

from __future__ import annotations

import argparse
import os
from dataclasses import dataclass, field
from pathlib import Path

from .calibration import DEFAULT_GRID, DEFAULT_TRIALS, resolve_psi
from .errors import DarbsError, UsageError
from .kernel import KERNEL_NAMES, preset

SUBCOMMANDS = ("calibrate", "fit1d", "gradcheck", "render", "fit-image", "fit-scene")
MANIFEST_NAME = "run-manifest"


@dataclass(frozen=True)
class Option:
    name: str
    kind: str      # str | int | float | psi | kernel | kernels | rgb
    default: object = None
    help: str = ""
    required: bool = False


def _common():
    return [
        Option("seed", "int", 0, "random seed"),
        Option("out_dir", "str", "out", "directory that receives every artifact"),
        Option("out", "str", "report.csv", "report file name inside the output directory"),
        Option("threads", "int", None, "worker cap (default: machine parallelism)"),
    ]


def _kernel_opts(required=True):
    return [
        Option("kernel", "kernel", None, "kernel preset, optionally name:xi=..,beta=..,lobes=..",
               required=required),
        Option("beta", "float", None, "override the preset's beta"),
        Option("xi", "float", None, "override the preset's xi"),
        Option("lobes", "int", None, "override the preset's lobe count"),
    ]


def _fit_opts(iters, lr_position, lr_scale, lr_rotation, lr_color):
    return [
        Option("iters", "int", iters, "optimisation steps"),
        Option("lam", "float", 0.2, "D-SSIM weight lambda of the total loss"),
        Option("lr_position", "float", lr_position),
        Option("lr_scale", "float", lr_scale),
        Option("lr_rotation", "float", lr_rotation),
        Option("lr_opacity", "float", 0.02),
        Option("lr_color", "float", lr_color),
        Option("lr_final_ratio", "float", 0.01, "final/initial learning rate of the decay"),
    ]


SCHEMA = {
    "calibrate": _kernel_opts() + [
        Option("trials", "int", DEFAULT_TRIALS, "Monte Carlo trials"),
        Option("grid", "int", DEFAULT_GRID, "grid points per axis"),
        Option("eig_lo", "float", 0.5, "smallest covariance eigenvalue"),
        Option("eig_hi", "float", 2.0, "largest covariance eigenvalue"),
        Option("axis", "str", "z", "collapse axis"),
    ],
    "fit1d": _kernel_opts() + [
        Option("target", "str", None, "signal kind", required=True),
        Option("target_seed", "int", 0, "seed of the irregular target"),
        Option("samples", "int", 512),
        Option("n", "int", 10, "number of components"),
        Option("iters", "int", 5000),
        Option("lr", "float", 0.01),
    ],
    "gradcheck": [
        Option("kernels", "kernels", ",".join(KERNEL_NAMES), "comma-separated kernel presets"),
        Option("samples", "int", 1000, "kernel-level sample count"),
    ],
    "render": _kernel_opts() + [
        Option("scene", "str", "demo", "scene file, or 'demo' for the bundled scene"),
        Option("cameras", "str", "demo", "camera file, or 'demo'"),
        Option("psi", "psi", "auto", "covariance correction, a number or 'auto'"),
        Option("background", "rgb", "0,0,0"),
    ],
    "fit-image": _kernel_opts() + [
        Option("target", "str", None, "PPM or float-dump image, or 'smooth'", required=True),
        Option("n", "int", 300, "number of splats"),
    ] + _fit_opts(2000, 0.05, 0.01, 0.01, 0.01),
    "fit-scene": _kernel_opts() + [
        Option("scene", "str", "demo", "scene file, or 'demo'"),
        Option("cameras", "str", "demo", "camera file, or 'demo'"),
        Option("targets", "str", "render", "comma-separated target images, or 'render' to "
               "render them from the scene"),
        Option("target_psi", "psi", "auto", "psi used to render the targets"),
        Option("psi", "psi", "auto", "psi used while fitting"),
        Option("perturb", "int", 1, "1: start from a perturbed copy of the scene"),
        Option("background", "rgb", "0,0,0"),
    ] + _fit_opts(2000, 1.6e-4, 5e-3, 1e-3, 2.5e-3),
}
for _opts in SCHEMA.values():
    _opts.extend(_common())


@dataclass
class RunConfig:
    subcommand: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def out_dir(self) -> Path:
        return Path(self.values["out_dir"])

    @property
    def threads(self) -> int:
        t = self.values.get("threads")
        return int(t) if t else (os.cpu_count() or 1)

    def manifest_lines(self):
        lines = [f"subcommand = {self.subcommand}"]
        for opt in SCHEMA[self.subcommand]:
            v = self.values[opt.name]
            if v is None:
                continue
            lines.append(f"{opt.name} = {format_value(opt, v)}")
        return lines


def format_value(opt: Option, v) -> str:
    if opt.kind == "rgb":
        return ",".join(repr(float(c)) for c in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(opt: Option, raw):
    if raw is None:
        return None
    text = str(raw).strip()
    try:
        if opt.kind == "int":
            return int(text)
        if opt.kind == "float":
            return float(text)
        if opt.kind == "psi":
            return "auto" if text == "auto" else resolve_psi(text, "")
        if opt.kind == "rgb":
            parts = [float(p) for p in text.split(",")]
            if len(parts) != 3:
                raise ValueError(text)
            return tuple(parts)
        if opt.kind == "kernel":
            preset(text)
            return text
        if opt.kind == "kernels":
            names = [p.strip() for p in text.split(",") if p.strip()]
            for name in names:
                preset(name)
            return ",".join(names)
    except DarbsError as exc:
        raise UsageError(f"{opt.name}: {text!r}: {exc}") from None
    except ValueError:
        raise UsageError(f"{opt.name}: malformed value {text!r}") from None
    return text


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; dashes in keys read as underscores."""
    # an unreadable file is an I/O failure, not a usage error, so OSError propagates
    text = Path(path).read_text()
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser(subcommand: str) -> argparse.ArgumentParser:
    p = _Parser(prog=f"darbsplat {subcommand}", add_help=True)
    p.add_argument("--config", default=None, help="key = value file; flags take precedence")
    for opt in SCHEMA[subcommand]:
        p.add_argument("--" + opt.name.replace("_", "-"), dest=opt.name, default=None,
                       help=opt.help or None)
    return p


def parse_config(argv, config_file=None) -> RunConfig:
    """Resolve defaults < config file < flags into a :class:`RunConfig`."""
    argv = list(argv)
    if "--config" in argv:
        i = argv.index("--config")
        if i + 1 >= len(argv):
            raise UsageError("--config needs a file name")
        config_file = argv[i + 1]
        del argv[i:i + 2]
    file_vals = read_config_file(config_file) if config_file else {}
    if argv and not argv[0].startswith("-"):
        sub = argv.pop(0)
    elif "subcommand" in file_vals:
        sub = file_vals["subcommand"]
    else:
        raise UsageError("missing subcommand; expected one of " + ", ".join(SUBCOMMANDS))
    if sub not in SCHEMA:
        raise UsageError(f"unknown subcommand {sub!r}")
    file_vals.pop("subcommand", None)
    known = {o.name for o in SCHEMA[sub]}
    for key in file_vals:
        if key not in known:
            raise UsageError(f"unknown config key {key!r} for {sub}")
    flags = vars(build_parser(sub).parse_args(argv))
    flags.pop("config", None)
    values = {}
    for opt in SCHEMA[sub]:
        raw = flags.get(opt.name)
        if raw is None:
            raw = file_vals.get(opt.name)
        if raw is None:
            if opt.required:
                raise UsageError(f"missing required option --{opt.name.replace('_', '-')}")
            raw = opt.default
        values[opt.name] = _convert(opt, raw)
    if values.get("threads") is not None and values["threads"] < 1:
        raise UsageError("threads must be at least 1")
    out_name = Path(values["out"])
    if out_name.is_absolute() or ".." in out_name.parts:
        raise UsageError(f"out must be a file name inside out_dir, got {values['out']!r}")
    return RunConfig(sub, values)

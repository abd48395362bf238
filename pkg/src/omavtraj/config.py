"""Run configuration: a nested JSON document merged over :data:`DEFAULTS`."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .corridor import PointCloud, RRTConfig, SFCConfig
from .costs import Limits, PenaltyWeights
from .flatness import InertiaParams
from .lbfgs import LBFGSSettings
from .polytope import VehicleShape
from .simtrack import Gains

DEFAULTS: dict[str, Any] = {
    "map_file": None,
    "bounds": None,
    "start": {"p": [0.0, 0.0, 1.0], "Q": [1.0, 0.0, 0.0, 0.0]},
    "goal": {"p": [1.0, 0.0, 1.0], "Q": [1.0, 0.0, 0.0, 0.0]},
    "limits": {"v_max": 0.6, "a_max": 2.0, "omega_max": 0.5},
    "weights": {"Wv": 1e5, "Wa": 1e5, "Womega": 1e5, "Wc": 1e5, "k_rho": 10.0, "kappa": 16},
    "s": 4,
    "d_piece": 1.0,
    "rrt": {
        "seed": 0,
        "step": 0.3,
        "goal_bias": 0.1,
        "max_iter": 200000,
        "radius": None,
        "goal_tol": 0.3,
        "check_resolution": 0.05,
    },
    "sfc": {"margin": 2.0, "max_faces": 40, "max_seg_len": 2.0},
    "lbfgs": {"memory": 8, "g_tol": 1e-5, "max_iter": 2000, "delta": 1e-4, "past": 10},
    "shape": {"lx": 1.1, "ly": 1.1, "lz": 0.42, "opt_margin": 0.05},
    "inertia": {"m": 2.0, "J_b": [[0.03, 0.0, 0.0], [0.0, 0.03, 0.0], [0.0, 0.0, 0.05]]},
    "gains": Gains().to_json(),
    "attitude_jitter": 0.01,
    "check": {"dt": 0.005, "corridor_tol": 0.01, "limit_slack": 0.05},
}

# keys whose value is a free-form sub-document (validated by its consumer)
_OPAQUE = {"bounds", "gains"}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        name = f"{prefix}{k}"
        if k not in base:
            raise ConfigError(f"unknown config key '{name}'")
        if isinstance(base[k], dict) and k not in _OPAQUE:
            if not isinstance(v, dict):
                raise ConfigError(f"config key '{name}' must be an object")
            out[k] = _merge(base[k], v, name + ".")
        elif k == "gains" and isinstance(v, dict):
            out[k] = {**base[k], **v}
        else:
            out[k] = v
    return out


def resolve(user: dict | None) -> dict:
    return _merge(DEFAULTS, user or {})


def load(path: str | Path | None) -> tuple[dict, Path]:
    """Resolved config and the directory relative paths are taken from."""
    if path is None:
        return resolve({}), Path.cwd()
    path = Path(path)
    try:
        user = json.loads(path.read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(user, dict):
        raise ConfigError("config must be a JSON object")
    return resolve(user), path.parent


def _num(cfg: dict, dotted: str) -> float:
    node: Any = cfg
    for part in dotted.split("."):
        node = node[part]
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ConfigError(f"config key '{dotted}' must be a number")
    return float(node)


def _vec(cfg: dict, dotted: str, n: int) -> np.ndarray:
    node: Any = cfg
    for part in dotted.split("."):
        node = node[part]
    try:
        a = np.asarray(node, dtype=float)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"config key '{dotted}' must be a list of {n} numbers") from e
    if a.shape != (n,) or not np.all(np.isfinite(a)):
        raise ConfigError(f"config key '{dotted}' must be a list of {n} numbers")
    return a


@dataclass
class Resolved:
    """Typed view of a resolved config."""

    raw: dict
    base_dir: Path

    def limits(self) -> Limits:
        try:
            return Limits(*(_num(self.raw, f"limits.{k}") for k in ("v_max", "a_max", "omega_max")))
        except ValueError as e:
            raise ConfigError(f"limits: {e}") from e

    def weights(self) -> PenaltyWeights:
        w = self.raw["weights"]
        try:
            return PenaltyWeights(
                W_v=_num(self.raw, "weights.Wv"),
                W_a=_num(self.raw, "weights.Wa"),
                W_omega=_num(self.raw, "weights.Womega"),
                W_c=_num(self.raw, "weights.Wc"),
                k_rho=_num(self.raw, "weights.k_rho"),
                kappa=int(w["kappa"]),
            )
        except ValueError as e:
            raise ConfigError(f"weights: {e}") from e

    def rrt(self, seed: int | None = None) -> RRTConfig:
        r = self.raw["rrt"]
        radius = r["radius"]
        if radius is None:
            radius = 0.5 * min(_num(self.raw, f"shape.{k}") for k in ("lx", "ly", "lz"))
        return RRTConfig(
            seed=int(r["seed"] if seed is None else seed),
            step=_num(self.raw, "rrt.step"),
            goal_bias=_num(self.raw, "rrt.goal_bias"),
            max_iter=int(r["max_iter"]),
            radius=float(radius),
            goal_tol=_num(self.raw, "rrt.goal_tol"),
            check_resolution=_num(self.raw, "rrt.check_resolution"),
        )

    def sfc(self) -> SFCConfig:
        return SFCConfig(
            margin=_num(self.raw, "sfc.margin"),
            max_faces=int(self.raw["sfc"]["max_faces"]),
            max_seg_len=_num(self.raw, "sfc.max_seg_len"),
        )

    def lbfgs(self) -> LBFGSSettings:
        lb = self.raw["lbfgs"]
        try:
            return LBFGSSettings(
                memory=int(lb["memory"]),
                g_tol=_num(self.raw, "lbfgs.g_tol"),
                max_iter=int(lb["max_iter"]),
                delta=_num(self.raw, "lbfgs.delta"),
                past=int(lb["past"]),
            )
        except ValueError as e:
            raise ConfigError(f"lbfgs: {e}") from e

    def true_shape(self) -> VehicleShape:
        return VehicleShape.cuboid(*(_num(self.raw, f"shape.{k}") for k in ("lx", "ly", "lz")))

    def opt_shape(self) -> VehicleShape:
        dims = (_num(self.raw, f"shape.{k}") for k in ("lx", "ly", "lz"))
        return VehicleShape.cuboid(*dims, margin=_num(self.raw, "shape.opt_margin"))

    def inertia(self) -> InertiaParams:
        try:
            return InertiaParams(m=_num(self.raw, "inertia.m"), J_b=np.asarray(self.raw["inertia"]["J_b"], dtype=float))
        except ValueError as e:
            raise ConfigError(f"inertia: {e}") from e

    def gains(self) -> Gains:
        try:
            return Gains.from_json(self.raw["gains"])
        except (KeyError, ValueError, TypeError) as e:
            raise ConfigError(f"gains: {e}") from e

    def endpoints(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return (
            _vec(self.raw, "start.p", 3),
            _unit(_vec(self.raw, "start.Q", 4), "start.Q"),
            _vec(self.raw, "goal.p", 3),
            _unit(_vec(self.raw, "goal.Q", 4), "goal.Q"),
        )

    def map_path(self) -> Path | None:
        mf = self.raw["map_file"]
        if mf in (None, ""):
            return None
        p = Path(mf)
        return p if p.is_absolute() else self.base_dir / p

    def cloud(self) -> PointCloud:
        mp = self.map_path()
        pts = read_map(mp) if mp is not None else np.zeros((0, 3))
        b = self.raw["bounds"]
        if b is None:
            s, _, g, _ = self.endpoints()
            allp = np.vstack([pts, s, g])
            lo, hi = allp.min(axis=0) - 1.0, allp.max(axis=0) + 1.0
        else:
            try:
                lo, hi = np.asarray(b["lo"], dtype=float), np.asarray(b["hi"], dtype=float)
            except (KeyError, TypeError, ValueError) as e:
                raise ConfigError("config key 'bounds' must be {'lo': [x,y,z], 'hi': [x,y,z]}") from e
            if lo.shape != (3,) or hi.shape != (3,) or np.any(lo >= hi):
                raise ConfigError("config key 'bounds' must satisfy lo < hi componentwise")
        return PointCloud(pts, lo, hi)


def _unit(q: np.ndarray, name: str) -> np.ndarray:
    n = np.linalg.norm(q)
    if abs(n - 1.0) > 1e-6:
        raise ConfigError(f"config key '{name}' must be a unit quaternion")
    return q / n


def read_map(path: str | Path) -> np.ndarray:
    """Point cloud CSV: one 'x,y,z' row per point, optional header line."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"map file not found: {path}")
    rows = []
    with open(path) as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            try:
                vals = [float(x) for x in parts]
            except ValueError:
                if i == 0:
                    continue
                raise ConfigError(f"{path}:{i + 1}: cannot parse point '{line}'") from None
            if len(vals) != 3:
                raise ConfigError(f"{path}:{i + 1}: expected 3 columns, got {len(vals)}")
            rows.append(vals)
    return np.array(rows, dtype=float).reshape(-1, 3)


def write_map(points: np.ndarray, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("x,y,z\n")
        for p in np.asarray(points):
            fh.write(f"{p[0]:.9g},{p[1]:.9g},{p[2]:.9g}\n")


def dumps(obj: Any) -> str:
    """Canonical JSON text: sorted keys, shortest round-trip floats, trailing newline."""
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"

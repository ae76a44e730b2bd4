"""2-D obstacle environments made of axis-aligned ellipses inside a box."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Ellipse:
    center: tuple[float, float]
    semi_axes: tuple[float, float]

    def __post_init__(self):
        c = tuple(float(v) for v in self.center)
        ab = tuple(float(v) for v in self.semi_axes)
        if len(c) != 2 or len(ab) != 2:
            raise ValueError("ellipse center and semi_axes must be 2-vectors")
        if not (ab[0] > 0 and ab[1] > 0):
            raise ValueError(f"semi-axes must be positive, got {ab}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "semi_axes", ab)

    def level(self, p) -> np.ndarray:
        """``((x-cx)/a)^2 + ((y-cy)/b)^2``: below 1 inside, 1 on the boundary."""
        p = np.asarray(p, dtype=np.float64)
        d = (p - np.asarray(self.center)) / np.asarray(self.semi_axes)
        return np.sum(d * d, axis=-1)

    def level_grad(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        ab = np.asarray(self.semi_axes)
        return 2.0 * (p - np.asarray(self.center)) / (ab * ab)

    def inflated(self, margin: float) -> "Ellipse":
        a, b = self.semi_axes
        return Ellipse(self.center, (a + margin, b + margin))


@dataclass(frozen=True)
class Environment:
    bounds: tuple[float, float, float, float]  # xmin, xmax, ymin, ymax
    obstacles: tuple[Ellipse, ...] = field(default_factory=tuple)

    def __post_init__(self):
        b = tuple(float(v) for v in self.bounds)
        if len(b) != 4 or not (b[0] < b[1] and b[2] < b[3]):
            raise ValueError(f"bounds must be (xmin, xmax, ymin, ymax) with positive extent, got {b}")
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    def in_bounds(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        x0, x1, y0, y1 = self.bounds
        return (p[..., 0] >= x0) & (p[..., 0] <= x1) & (p[..., 1] >= y0) & (p[..., 1] <= y1)

    def in_obstacle(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        hit = np.zeros(p.shape[:-1], dtype=bool)
        for ob in self.obstacles:
            hit |= ob.level(p) <= 1.0
        return hit

    def collides(self, p) -> np.ndarray:
        """Vectorized :func:`collision` over the leading axes of ``p``."""
        return self.in_obstacle(p) | ~self.in_bounds(p)

    def inflated(self, margin: float) -> "Environment":
        """Same box with every obstacle grown by ``margin`` along both axes."""
        return Environment(self.bounds, tuple(o.inflated(margin) for o in self.obstacles))

    def sample_free_box(self, rng: np.random.Generator, n: int) -> np.ndarray:
        x0, x1, y0, y1 = self.bounds
        return rng.uniform([x0, y0], [x1, y1], size=(n, 2))

    def to_dict(self) -> dict:
        return {
            "bounds": list(self.bounds),
            "obstacles": [{"center": list(o.center), "semi_axes": list(o.semi_axes)}
                          for o in self.obstacles],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Environment":
        try:
            obs = tuple(Ellipse(o["center"], o["semi_axes"]) for o in d.get("obstacles", []))
            return cls(tuple(d["bounds"]), obs)
        except KeyError as exc:
            raise ValueError(f"environment is missing field {exc}") from None


def collision(env: Environment, p) -> bool:
    """True iff ``p`` lies inside an obstacle (boundary included) or outside the box."""
    return bool(env.collides(np.asarray(p, dtype=np.float64)))


_BUILTIN = {
    "s_tunnel": (
        Environment((0.0, 20.0, -10.0, 10.0),
                    (Ellipse((6.0, -4.5), (2.0, 10.0)), Ellipse((14.0, 4.0), (2.0, 10.0)))),
        (0.0, 0.0), (20.0, 0.0),
    ),
    "u_tunnel": (
        Environment((0.0, 20.0, -10.0, 10.0),
                    (Ellipse((10.0, 8.0), (5.0, 5.0)), Ellipse((10.0, -4.0), (5.0, 5.0)))),
        (0.0, 0.0), (20.0, 4.0),
    ),
}


def builtin_environment(name: str) -> tuple[Environment, np.ndarray, np.ndarray]:
    """``(environment, start_mean, goal_mean)`` for ``"s_tunnel"`` or ``"u_tunnel"``."""
    try:
        env, start, goal = _BUILTIN[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(_BUILTIN)}") from None
    return env, np.array(start), np.array(goal)


BUILTIN_ENVIRONMENTS = tuple(sorted(_BUILTIN))

"""
Latent Operations Module
Coordinate unit-vector embeddings, spherical interpolation and great-circle
traversal, plus image emission for the resulting paths.
"""
import logging
import math
import os
from dataclasses import dataclass
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from errors import DimensionError, GeometryError
from modules.diffcore import as_tensor, net_forward
from modules.nets import Network
from rng import Xoshiro256pp
import storage

logger = logging.getLogger(__name__)

SLERP = "slerp"
LINEAR = "linear"
GREAT_CIRCLE = "great_circle"
PATH_MODES = (SLERP, LINEAR, GREAT_CIRCLE)

# Below this sin(theta) the two vectors are treated as collinear
COLLINEAR_SIN = 1e-9


@dataclass
class InterpolationPath:
    points: np.ndarray
    mode: str
    steps: int
    seed: Optional[int] = None

    def __post_init__(self):
        self.points = as_tensor(self.points)
        if self.mode not in PATH_MODES:
            raise ValueError(f"unknown path mode {self.mode!r}")
        if self.steps < 2:
            raise GeometryError(f"a path needs at least 2 steps, got {self.steps}")
        if self.points.ndim != 2 or len(self.points) != self.steps:
            raise DimensionError("path points shape mismatch", expected=(self.steps, "d"),
                                 actual=self.points.shape, module="latentops")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=1)

    def metadata(self) -> Dict[str, Any]:
        return {"mode": self.mode, "steps": self.steps, "seed": self.seed,
                "dim": self.dim, "norms": [float(n) for n in self.norms()]}


class Embedding(NamedTuple):
    """Images for e_i, e_j and their sum e_i + e_j."""
    x_i: np.ndarray
    x_j: np.ndarray
    x_o: np.ndarray


def unit_vector(i: int, d: int) -> np.ndarray:
    """e_i in d dimensions; i is 1-based."""
    if d < 1 or not 1 <= i <= d:
        raise DimensionError("unit vector index out of range", expected=f"1..{d}", actual=i,
                             module="latentops")
    e = np.zeros(d)
    e[i - 1] = 1.0
    return e


def embed_compose(G: Network, i: int, j: int, d: Optional[int] = None) -> Embedding:
    """G(e_i), G(e_j) and G(e_i + e_j)."""
    d = G.input_dim if d is None else d
    if d != G.input_dim:
        raise DimensionError("latent dimension mismatch", expected=G.input_dim, actual=d,
                             module="latentops")
    e_i, e_j = unit_vector(i, d), unit_vector(j, d)
    return Embedding(net_forward(G, e_i), net_forward(G, e_j), net_forward(G, e_i + e_j))


def embed_pairs(G: Network, limit: Optional[int] = None) -> List[Tuple[int, int, Embedding]]:
    """embed_compose for every pair i < j among the first `limit` coordinates."""
    limit = G.input_dim if limit is None else min(limit, G.input_dim)
    return [(i, j, embed_compose(G, i, j))
            for i in range(1, limit + 1) for j in range(i + 1, limit + 1)]


def _norm_checked(z: np.ndarray, name: str) -> float:
    norm = float(np.linalg.norm(z))
    if norm == 0.0 or not math.isfinite(norm):
        raise GeometryError(f"{name} must have a finite non-zero norm")
    return norm


def angle_between(z1, z2) -> float:
    """Angle via arccos of the cosine clamped to [-1, 1]."""
    z1, z2 = as_tensor(z1), as_tensor(z2)
    cos = np.dot(z1, z2) / (_norm_checked(z1, "z1") * _norm_checked(z2, "z2"))
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def lerp(z1, z2, mu: float) -> np.ndarray:
    z1, z2 = as_tensor(z1), as_tensor(z2)
    return (1.0 - mu) * z1 + mu * z2


def slerp(z1, z2, mu: float) -> np.ndarray:
    """
    Spherical linear interpolation:
    sin((1 - mu) theta) / sin(theta) * z1 + sin(mu theta) / sin(theta) * z2,
    theta the angle between z1 and z2. Falls back to linear interpolation when
    the vectors are collinear; antipodal vectors have no unique path.
    """
    z1, z2 = as_tensor(z1), as_tensor(z2)
    if z1.shape != z2.shape:
        raise DimensionError("latent shape mismatch", expected=z1.shape, actual=z2.shape,
                             module="latentops")
    if not 0.0 <= mu <= 1.0:
        raise GeometryError(f"mu must lie in [0, 1], got {mu}")
    theta = angle_between(z1, z2)
    sin_theta = math.sin(theta)
    if sin_theta < COLLINEAR_SIN:
        if theta > math.pi / 2:
            raise GeometryError("slerp between antipodal vectors is undefined")
        return lerp(z1, z2, mu)
    return (math.sin((1.0 - mu) * theta) / sin_theta) * z1 + (math.sin(mu * theta) / sin_theta) * z2


def interpolate(z1, z2, steps: int, mode: str = SLERP) -> InterpolationPath:
    """`steps` points from z1 (mu = 0) to z2 (mu = 1)."""
    if steps < 2:
        raise GeometryError(f"a path needs at least 2 steps, got {steps}")
    if mode not in (SLERP, LINEAR):
        raise ValueError(f"interpolate supports {SLERP!r} and {LINEAR!r}, got {mode!r}")
    step_fn = slerp if mode == SLERP else lerp
    mus = [k / (steps - 1) for k in range(steps)]
    return InterpolationPath(np.stack([step_fn(z1, z2, mu) for mu in mus]), mode, steps)


def orthogonal_direction(z, rng: Xoshiro256pp) -> np.ndarray:
    """Random unit vector orthogonal to z (Gram-Schmidt on a normal draw)."""
    z = as_tensor(z)
    norm = _norm_checked(z, "z")
    if z.size < 2:
        raise GeometryError("a great circle needs at least 2 dimensions")
    unit = z / norm
    for _ in range(16):
        r = rng.normals(z.size)
        w = r - np.dot(r, unit) * unit
        w_norm = np.linalg.norm(w)
        if w_norm > 1e-12:
            return w / w_norm
    raise GeometryError("could not draw a direction orthogonal to z")


def great_circle(z, steps: int, seed: int = 0, w=None) -> InterpolationPath:
    """
    Closed loop p_k = cos(2 pi k / steps) z + sin(2 pi k / steps) |z| w, k = 0..steps-1.

    w is a unit vector orthogonal to z, drawn from Xoshiro256pp(seed) unless
    given; a given w is orthogonalized against z and normalized.
    """
    z = as_tensor(z)
    norm = _norm_checked(z, "z")
    if steps < 2:
        raise GeometryError(f"a path needs at least 2 steps, got {steps}")
    if w is None:
        w = orthogonal_direction(z, Xoshiro256pp(seed))
    else:
        w = as_tensor(w)
        if w.shape != z.shape:
            raise DimensionError("direction shape mismatch", expected=z.shape, actual=w.shape,
                                 module="latentops")
        w = w - (np.dot(w, z) / (norm * norm)) * z
        w = w / _norm_checked(w, "w orthogonal to z")
        seed = None
    points = []
    for k in range(steps):
        angle = 2.0 * math.pi * k / steps
        points.append(math.cos(angle) * z + (math.sin(angle) * norm) * w)
    return InterpolationPath(np.stack(points), GREAT_CIRCLE, steps, seed)


# Image emission

def as_image(vector) -> np.ndarray:
    """
    Reshape a generator output for PGM/PPM emission: side x side grayscale,
    3 x side x side colour, otherwise a 1 x n strip.
    """
    vector = as_tensor(vector).ravel()
    n = vector.size
    side = math.isqrt(n)
    if side * side == n:
        return vector.reshape(side, side)
    if n % 3 == 0:
        side = math.isqrt(n // 3)
        if 3 * side * side == n:
            return vector.reshape(3, side, side)
    return vector.reshape(1, n)


def tile_images(images: Sequence[np.ndarray], cols: Optional[int] = None,
                border: float = -1.0) -> np.ndarray:
    """Arrange equally shaped images in a grid separated by 1-pixel borders."""
    if not images:
        raise ValueError("no images to tile")
    first = images[0]
    cols = cols or len(images)
    rows = math.ceil(len(images) / cols)
    colour = first.ndim == 3
    height, width = first.shape[-2:]
    grid_shape = (rows * (height + 1) + 1, cols * (width + 1) + 1)
    grid = np.full(((3,) if colour else ()) + grid_shape, border)
    for index, image in enumerate(images):
        if image.shape != first.shape:
            raise DimensionError("image shape mismatch", expected=first.shape,
                                 actual=image.shape, module="latentops")
        r, c = divmod(index, cols)
        top, left = 1 + r * (height + 1), 1 + c * (width + 1)
        grid[..., top:top + height, left:left + width] = image
    return grid


def render_path(G: Network, path: InterpolationPath) -> np.ndarray:
    """G applied to every point of the path, shape (steps, output_dim)."""
    return net_forward(G, path.points)


def _images_writable(outputs: np.ndarray) -> bool:
    return bool(np.all(np.abs(outputs) <= 1.0 + storage.PIXEL_TOLERANCE))


def write_path_outputs(G: Network, path: InterpolationPath, out_dir) -> Dict[str, Any]:
    """
    Write the path's latents and images plus `path.json` metadata.

    Images (one PGM/PPM per frame and a grid) are only written when every
    output lies in [-1, 1]; the raw outputs always go to `outputs.glvt`.
    """
    outputs = render_path(G, path)
    os.makedirs(out_dir, exist_ok=True)
    storage.write_tensor(os.path.join(out_dir, "latents.glvt"), path.points)
    storage.write_tensor(os.path.join(out_dir, "outputs.glvt"), outputs)
    meta = path.metadata()
    meta["images"] = _images_writable(outputs)
    if meta["images"]:
        frames = [as_image(row) for row in outputs]
        for k, frame in enumerate(frames):
            storage.write_image_pgm(os.path.join(out_dir, _frame_name(k, frame)), frame)
        grid = tile_images(frames)
        storage.write_image_pgm(os.path.join(out_dir, _frame_name("grid", grid)), grid)
    else:
        logger.info("Generator outputs leave [-1, 1]; skipping image emission")
    storage.write_json(os.path.join(out_dir, "path.json"), meta)
    return meta


def write_embedding_outputs(embeddings: Sequence[Tuple[int, int, Embedding]], out_dir) -> Dict[str, Any]:
    """Side-by-side sheets x_i | x_j | x_o per pair, plus raw outputs and `embed.json`."""
    os.makedirs(out_dir, exist_ok=True)
    pairs = []
    for i, j, emb in embeddings:
        stacked = np.stack([emb.x_i, emb.x_j, emb.x_o])
        storage.write_tensor(os.path.join(out_dir, f"embed_{i:03d}_{j:03d}.glvt"), stacked)
        wrote_image = _images_writable(stacked)
        if wrote_image:
            sheet = tile_images([as_image(v) for v in stacked])
            storage.write_image_pgm(os.path.join(out_dir, _frame_name(f"{i:03d}_{j:03d}", sheet,
                                                                      prefix="embed")), sheet)
        pairs.append({"i": i, "j": j, "image": wrote_image})
    meta = {"pairs": pairs}
    storage.write_json(os.path.join(out_dir, "embed.json"), meta)
    return meta


def _frame_name(key, image: np.ndarray, prefix: str = "frame") -> str:
    extension = "ppm" if image.ndim == 3 else "pgm"
    key = f"{key:03d}" if isinstance(key, int) else key
    return f"{prefix}_{key}.{extension}"

"""
Merging per-electrode images into one field over the union of their domains.
"""
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from errors import EmptyInputError, MergeError
from geometry.models import Mesh
from reconstruction.tikhonov import ReconImage

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MergedImage:
    """
    gamma:    (M,) mean conductivity per triangle, NaN where no image covers it
    coverage: (M,) number of images covering each triangle
    """
    gamma: np.ndarray
    coverage: np.ndarray
    mesh_id: str
    centers: tuple

    @property
    def covered(self) -> np.ndarray:
        return self.coverage > 0


def merge_images(images: Sequence[ReconImage], mesh: Mesh) -> MergedImage:
    """
    Unweighted mean of γ over every image whose domain holds the triangle.

    Images are reduced in order of their center electrode so the result does
    not depend on the order they finished in.

    Raises:
        EmptyInputError: no images
        MergeError: an image belongs to a different mesh
    """
    if not images:
        raise EmptyInputError("No images to merge")
    for image in images:
        if image.mesh_id != mesh.mesh_id:
            raise MergeError(
                "Image was reconstructed on a different mesh",
                {"n": image.n, "image_mesh": image.mesh_id, "mesh": mesh.mesh_id},
            )
    total = np.zeros(mesh.n_triangles)
    coverage = np.zeros(mesh.n_triangles, dtype=np.int64)
    ordered = sorted(images, key=lambda im: im.n)
    for image in ordered:
        np.add.at(total, image.element_ids, image.gamma)
        np.add.at(coverage, image.element_ids, 1)
    gamma = np.full(mesh.n_triangles, np.nan)
    covered = coverage > 0
    gamma[covered] = total[covered] / coverage[covered]
    logger.info(f"Merged {len(images)} image(s) over {int(covered.sum())} of {mesh.n_triangles} triangles")
    return MergedImage(gamma=gamma, coverage=coverage, mesh_id=mesh.mesh_id,
                       centers=tuple(im.n for im in ordered))

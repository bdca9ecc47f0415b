"""Shared test utilities."""

import numpy as np

from memostyle.images import ImageTensor, image_from_array


def random_image(rng: np.random.Generator, size=(8, 8)) -> ImageTensor:
    return image_from_array(rng.random((*size, 3)))

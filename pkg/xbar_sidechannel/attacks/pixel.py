"""
This module contains the single-pixel and top-N pixel evasion attacks guided by power information

Strategies:
  - RP: a random pixel per image, ±ε with equal probability
  - +, -: the pixel with the largest column 1-norm, +ε or -ε
  - RD: the pixel with the largest column 1-norm, ±ε with equal probability
  - Worst: the pixel with the largest |∂L/∂u_j| per image, moved along the gradient sign (white box)
"""
import dataclasses
import typing

import numpy as np
import numpy.typing as npt
import structlog

import xbar_sidechannel.crossbar as crossbar
import xbar_sidechannel.data.dataset as dataset
import xbar_sidechannel.enums as enums
import xbar_sidechannel.errors as errors
import xbar_sidechannel.model as model
import xbar_sidechannel.power_sidechannel as power_sidechannel

log = structlog.get_logger()

EPSILON_GRID_SIZE = 21


def default_epsilon_grid() -> np.ndarray:
    """
    Returns 21 evenly spaced attack strengths covering the pixel range [0, 1]
    """
    return np.linspace(0.0, 1.0, EPSILON_GRID_SIZE)


@dataclasses.dataclass(frozen=True)
class AttackCurve:
    """
    Oracle test accuracy against attack strength for one strategy
    """
    strategy: enums.PixelAttackStrategy
    strengths: typing.Tuple[float, ...]
    accuracy: typing.Tuple[float, ...]
    seed: int
    run: int = 0
    n_pixels: int = 1

    def __post_init__(self):
        if len(self.strengths) != len(self.accuracy):
            raise errors.ShapeMismatchError(
                "Every strength needs one accuracy", (len(self.strengths),), (len(self.accuracy),)
            )
        if any(b < a for a, b in zip(self.strengths, self.strengths[1:])) or any(s < 0 for s in self.strengths):
            raise ValueError("Attack strengths must be non-negative and ascending")
        if any(not 0.0 <= a <= 1.0 for a in self.accuracy):
            raise errors.ValueRangeError("Accuracies", 0.0, 1.0, (min(self.accuracy), max(self.accuracy)))

    def rows(self) -> typing.List[typing.Tuple[str, float, float, int, int]]:
        """
        Returns (strategy, epsilon, accuracy, seed, run) rows
        """
        return [
            (self.strategy.value, eps, acc, self.seed, self.run)
            for eps, acc in zip(self.strengths, self.accuracy)
        ]


def choose_pixels(
        strategy: enums.PixelAttackStrategy,
        ds: dataset.LabeledDataset,
        n_pixels: int,
        seed: int,
        profile: typing.Optional[power_sidechannel.ColumnNormProfile] = None,
        white_box: typing.Optional[model.LinearLayerModel] = None,
) -> typing.Tuple[np.ndarray, np.ndarray]:
    """
    Returns, for every image, the attacked pixel indices and their perturbation signs,
    both as (images x n_pixels) arrays
    :param strategy: the attack strategy
    :param ds: the images to attack
    :param n_pixels: how many pixels per image
    :param seed: the seed for the random strategies
    :param profile: the extracted column 1-norms (needed by +, - and RD)
    :param white_box: the oracle's model (needed by Worst)
    """
    n_images, n_inputs = ds.inputs.shape
    if n_pixels < 1 or n_pixels > n_inputs:
        raise errors.SampleSizeError("Can not attack {} of {} pixels".format(n_pixels, n_inputs))
    if strategy.needs_profile and profile is None:
        raise errors.MissingAttackInputError(
            "The {} strategy needs the extracted column 1-norms".format(strategy.value)
        )
    if strategy is enums.PixelAttackStrategy.WORST_CASE and white_box is None:
        raise errors.MissingAttackInputError("The Worst strategy needs white-box access to the model")

    rng = np.random.default_rng(seed)

    if strategy is enums.PixelAttackStrategy.RANDOM_PIXEL:
        if n_pixels == 1:
            pixels = rng.integers(0, n_inputs, size=(n_images, 1))
        else:
            pixels = np.stack([rng.choice(n_inputs, size=n_pixels, replace=False) for _ in range(n_images)])
        return pixels, rng.choice([-1.0, 1.0], size=(n_images, n_pixels))

    if strategy is enums.PixelAttackStrategy.WORST_CASE:
        gradient = white_box.input_sensitivity_batch(ds.inputs, ds.targets())
        pixels = np.argsort(-np.abs(gradient), axis=1, kind="stable")[:, :n_pixels]
        return pixels, np.sign(np.take_along_axis(gradient, pixels, axis=1))

    pixels = np.broadcast_to(profile.top_columns(n_pixels), (n_images, n_pixels))
    if strategy is enums.PixelAttackStrategy.PLUS_NORM:
        signs = np.ones((n_images, n_pixels))
    elif strategy is enums.PixelAttackStrategy.MINUS_NORM:
        signs = -np.ones((n_images, n_pixels))
    else:
        signs = rng.choice([-1.0, 1.0], size=(n_images, n_pixels))
    return pixels, signs


def perturb_pixels(
        inputs: np.ndarray, pixels: np.ndarray, signs: np.ndarray, epsilon: float, clip: bool = True
) -> np.ndarray:
    """
    Returns a copy of the inputs with pixel[i, k] of image i moved by signs[i, k]·ε.
    Every other pixel is left untouched
    :param inputs: the (images x N) clean inputs
    :param pixels: the (images x n) attacked pixel indices
    :param signs: the (images x n) perturbation directions
    :param epsilon: the attack strength
    :param clip: clip the attacked pixels back into [0, 1]
    """
    if epsilon < 0:
        raise ValueError("The attack strength must be non-negative, got {}".format(epsilon))

    perturbed = np.array(inputs, dtype=np.float64)
    rows = np.arange(perturbed.shape[0])[:, None]
    moved = perturbed[rows, pixels] + signs * epsilon
    if clip:
        moved = np.clip(moved, 0.0, 1.0)
    perturbed[rows, pixels] = moved
    return perturbed


def oracle_accuracy(oracle: crossbar.CrossbarInstance, inputs: np.ndarray, labels: np.ndarray, clipped: bool) -> float:
    """
    Returns the fraction of inputs the oracle labels correctly
    """
    if labels.size == 0:
        return 0.0
    return float(np.mean(oracle.predict(inputs, validate=clipped) == labels))


def multi_pixel_attack(
        oracle: crossbar.CrossbarInstance,
        profile: typing.Optional[power_sidechannel.ColumnNormProfile],
        model_for_worst: typing.Optional[model.LinearLayerModel],
        ds: dataset.LabeledDataset,
        strategy: enums.PixelAttackStrategy,
        epsilon: float,
        seed: int,
        n_pixels: int,
        clip: bool = True,
) -> float:
    """
    Attacks n_pixels pixels of every image and returns the oracle accuracy on the result.
    The norm-guided strategies attack the same top-N pixels in every image; RD draws every sign independently
    :param oracle: the crossbar under attack
    :param profile: the extracted column 1-norms
    :param model_for_worst: the oracle's model, for the white-box Worst strategy
    :param ds: the test set
    :param strategy: the attack strategy
    :param epsilon: the attack strength
    :param seed: the seed for the random strategies
    :param n_pixels: how many pixels per image
    :param clip: clip attacked pixels to [0, 1]
    """
    pixels, signs = choose_pixels(strategy, ds, n_pixels, seed, profile, model_for_worst)
    perturbed = perturb_pixels(ds.inputs, pixels, signs, epsilon, clip)
    return oracle_accuracy(oracle, perturbed, ds.labels, clip)


def single_pixel_attack(
        oracle: crossbar.CrossbarInstance,
        profile: typing.Optional[power_sidechannel.ColumnNormProfile],
        model_for_worst: typing.Optional[model.LinearLayerModel],
        ds: dataset.LabeledDataset,
        strategy: enums.PixelAttackStrategy,
        epsilon: float,
        seed: int,
        clip: bool = True,
) -> float:
    """
    Attacks one pixel of every image and returns the oracle accuracy on the result.
    See multi_pixel_attack
    """
    return multi_pixel_attack(oracle, profile, model_for_worst, ds, strategy, epsilon, seed, 1, clip)


def attack_curve(
        oracle: crossbar.CrossbarInstance,
        profile: typing.Optional[power_sidechannel.ColumnNormProfile],
        model_for_worst: typing.Optional[model.LinearLayerModel],
        ds: dataset.LabeledDataset,
        strategy: enums.PixelAttackStrategy,
        strengths: npt.ArrayLike,
        seed: int,
        run: int = 0,
        n_pixels: int = 1,
        clip: bool = True,
) -> AttackCurve:
    """
    Sweeps the attack strength. The pixels and signs are drawn once and reused at every strength,
    so the curve isolates the effect of ε
    """
    strengths = tuple(float(e) for e in strengths)
    pixels, signs = choose_pixels(strategy, ds, n_pixels, seed, profile, model_for_worst)
    accuracy = tuple(
        oracle_accuracy(oracle, perturb_pixels(ds.inputs, pixels, signs, eps, clip), ds.labels, clip)
        for eps in strengths
    )
    log.debug("attack curve finished", strategy=strategy.value, n_pixels=n_pixels, run=run)
    return AttackCurve(strategy, strengths, accuracy, seed, run, n_pixels)


def exhaustive_single_pixel_accuracy(
        oracle: crossbar.CrossbarInstance, ds: dataset.LabeledDataset, epsilon: float, clip: bool = True
) -> float:
    """
    Returns the oracle accuracy when every image gets the most damaging of all 2N single-pixel
    perturbations (every pixel, both signs). This is the strongest possible single-pixel attack
    :param oracle: the crossbar under attack
    :param ds: the images, keep this small: 2N forward passes per image
    :param epsilon: the attack strength
    :param clip: clip attacked pixels to [0, 1]
    """
    n_inputs = ds.feature_dim
    pixels = np.tile(np.arange(n_inputs), 2)[:, None]
    signs = np.repeat([1.0, -1.0], n_inputs)[:, None]

    correct = 0
    for u, label in zip(ds.inputs, ds.labels):
        candidates = perturb_pixels(np.broadcast_to(u, (2 * n_inputs, n_inputs)), pixels, signs, epsilon, clip)
        candidates = np.vstack([u[None, :], candidates])
        correct += int(np.all(oracle.predict(candidates, validate=clip) == label))
    return correct / len(ds) if len(ds) else 0.0


def random_direction_agreement(
        profile: power_sidechannel.ColumnNormProfile,
        white_box: model.LinearLayerModel,
        ds: dataset.LabeledDataset,
        n_pixels: int,
        seed: int,
) -> float:
    """
    Returns the fraction of images for which the RD strategy guessed the gradient sign
    of every attacked pixel, expected to be about (1/2)^n_pixels
    """
    pixels, signs = choose_pixels(
        enums.PixelAttackStrategy.RANDOM_DIRECTION_NORM, ds, n_pixels, seed, profile=profile
    )
    gradient = white_box.input_sensitivity_batch(ds.inputs, ds.targets())
    true_signs = np.sign(np.take_along_axis(gradient, pixels, axis=1))
    return float(np.mean(np.all(signs == true_signs, axis=1)))

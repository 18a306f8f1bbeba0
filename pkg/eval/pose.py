"""Pose preservation summary for a multi-channel continuous attribute (e.g. yaw/pitch/roll)."""

from dataclasses import dataclass, field
from typing import Iterable

from errors import DataError
from eval.scoring import TranslationTriplet, attribute_match
from schema import AttributeSchema


@dataclass
class PoseReport:
    name: str
    attribute: str
    channels: tuple[str, ...]
    channel_distance: dict[str, float] = field(default_factory=dict)  # mean |ŷ - input| per channel
    d_p: float = 0.0
    pm: float | None = None
    n: int = 0
    n_pm: int = 0  # triplets where input and guidance poses differ


def pose_report(
    triplets: Iterable[TranslationTriplet],
    schema: AttributeSchema,
    attribute: str,
    name: str = "",
) -> PoseReport:
    """Mean per-channel distance to the input pose, their mean D_p, and the match fraction PM.

    PM counts outputs strictly closer to the input pose than to the guidance
    pose, over triplets whose input and guidance poses differ.
    """
    k = schema.index_of(attribute)
    decl = schema[k]
    if decl.is_categorical or not decl.channels:
        raise DataError(f"{attribute} is not a multi-channel continuous attribute")

    sums = [0.0] * len(decl.channels)
    n = n_pm = matches = 0
    for t in triplets:
        pose_a, pose_b, pose_hat = t.y_a[k], t.y_b[k], t.y_hat[k]
        for pose in (pose_a, pose_b, pose_hat):
            if not isinstance(pose, tuple) or len(pose) != len(decl.channels):
                raise DataError(f"triplet {t.input_id or n}: missing pose channels for {attribute}")
        n += 1
        for c, (u, v) in enumerate(zip(pose_hat, pose_a)):
            sums[c] += abs(u - v)
        if pose_a != pose_b:
            n_pm += 1
            matches += attribute_match(schema, k, pose_hat, pose_a, pose_b)

    if n == 0:
        raise DataError("pose report needs at least one triplet")
    distances = {c: s / n for c, s in zip(decl.channels, sums)}
    return PoseReport(
        name=name,
        attribute=attribute,
        channels=decl.channels,
        channel_distance=distances,
        d_p=sum(distances.values()) / len(distances),
        pm=matches / n_pm if n_pm else None,
        n=n,
        n_pm=n_pm,
    )

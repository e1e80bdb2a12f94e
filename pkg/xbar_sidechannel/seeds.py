"""
This module contains the seed splitting function.

A component seed is the first 8 bytes (big endian) of SHA-256("<master seed>/<label>").
Adding a new component never changes the seed of an existing one
"""
import hashlib
import threading
import typing


def derive_seed(master_seed: int, label: str) -> int:
    """
    Returns the seed of one component
    :param master_seed: the run's master seed
    :param label: a unique, stable name for the component, e.g. "table1/linear_mse/run0"
    """
    digest = hashlib.sha256("{}/{}".format(master_seed, label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class SeedLineage:
    """
    Derives component seeds and remembers every one handed out,
    so a run manifest can list what is needed to re-create each random stream
    """

    def __init__(self, master_seed: int):
        """
        :param master_seed: the run's master seed
        """
        self.master_seed = master_seed
        self._derived = {}          # type: typing.Dict[str, int]
        self._lock = threading.Lock()

    def seed(self, label: str) -> int:
        """
        Returns (and records) the seed of one component
        :param label: the component label
        """
        value = derive_seed(self.master_seed, label)
        with self._lock:
            self._derived[label] = value
        return value

    def as_dict(self) -> typing.Dict[str, typing.Any]:
        with self._lock:
            derived = dict(sorted(self._derived.items()))
        return {"master_seed": self.master_seed, "scheme": "sha256(master/label)[:8]", "derived": derived}

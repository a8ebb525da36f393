import hashlib
import json

import numpy as np


def derive_seed(parent, label, index=0):
    """
    Derive a child seed from a parent seed, a component label and an index.

    Args:
        parent (int): The parent seed.
        label (str): Name of the component consuming the seed.
        index (int): Position of the sub-task (trial number, gate number, ...).

    Returns:
        int: An unsigned 64-bit seed, stable across runs and platforms.
    """
    digest = hashlib.md5(f"{parent}:{label}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class DisagreementCounter:
    def __init__(self, rows, cols):
        """
        Initialize the counter with zero disagreements for every entry.
        Each entry counts how many samples disagreed with the target there.
        """
        self.rows = rows
        self.cols = cols
        self.trials = 0
        self.counts = np.zeros((rows, cols), dtype=np.int64)

    def add_sample(self, mismatch):
        """
        Record one sample.

        Args:
            mismatch (np.ndarray): Boolean matrix, True where the sample
                disagreed with the target.
        """
        if mismatch.shape != (self.rows, self.cols):
            raise ValueError(
                f"mismatch mask has shape {mismatch.shape}, expected {(self.rows, self.cols)}"
            )
        self.counts += mismatch
        self.trials += 1

    def merge(self, other):
        """Add the counts of another counter over the same shape."""
        if (other.rows, other.cols) != (self.rows, self.cols):
            raise ValueError("cannot merge counters of different shapes")
        self.counts += other.counts
        self.trials += other.trials

    def get_count(self, i, j):
        """
        Get the number of disagreements recorded at entry (i, j).

        Returns:
            int: The count (0 if no sample disagreed there).
        """
        return int(self.counts[i, j])

    def max_count(self):
        return int(self.counts.max()) if self.counts.size else 0

    def dump_to_file(self, file_path):
        """
        Save the current state of the counter to a JSON file.

        Args:
            file_path (str): The path to the file where data will be saved.
        """
        with open(file_path, "w") as file:
            json.dump(
                {
                    "rows": self.rows,
                    "cols": self.cols,
                    "trials": self.trials,
                    "counts": self.counts.tolist(),
                },
                file,
            )

    @classmethod
    def load_from_file(cls, file_path):
        """
        Create a counter initialized with data from a file written by dump_to_file.

        Returns:
            DisagreementCounter: The restored counter.
        """
        with open(file_path, "r") as file:
            data = json.load(file)
        instance = cls(data["rows"], data["cols"])
        instance.trials = data["trials"]
        instance.counts = np.array(data["counts"], dtype=np.int64).reshape(
            instance.rows, instance.cols
        )
        return instance

    def __repr__(self):
        return (
            f"DisagreementCounter(rows={self.rows}, cols={self.cols}, "
            f"trials={self.trials}, max={self.max_count()})"
        )

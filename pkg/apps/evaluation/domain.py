from typing import NamedTuple


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float

import warnings
from importlib import resources

import numpy as np
import pytest

from episurv import cohort as co
from episurv.coxph import SparseColumnWarning


@pytest.fixture(autouse=True)
def _quiet_sparse_columns():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SparseColumnWarning)
        yield


@pytest.fixture(scope="session")
def golden_path():
    return str(resources.files("episurv") / "data" / "calibrated.csv")


@pytest.fixture(scope="session")
def golden(golden_path):
    return co.read_cohort(golden_path)


@pytest.fixture
def rng():
    return np.random.default_rng(20180117)


def make_subject(sid="A", **kw):
    base = dict(
        id=sid,
        name=f"name {sid}",
        age_years=35.0,
        sex=co.Sex.MALE,
        allegiance=co.Allegiance.STARK,
        occupation=co.Occupation.HOUSE_MEMBER,
        region=co.Region.NORTH,
        entry_episode=1,
        exit_episode=67,
        event=False,
    )
    base.update(kw)
    return co.Subject(**base)

import io

import numpy as np
import pytest

from fixrocket.data import Trial, TrialDataset


def make_trial(
    rng,
    subject_id="hc000",
    condition="HC",
    task="pro",
    session_id=None,
    trial_index=0,
):
    return Trial(
        channels=rng.standard_normal((4, 440)),
        subject_id=subject_id,
        condition=condition,
        task=task,
        session_id=session_id or f"{subject_id}-s0-{task}",
        trial_index=trial_index,
    )


def make_dataset(n_subjects_per_class=4, trials_per_subject=6, seed=0, **kw):
    """Random trial dataset with balanced classes; channels are pure noise."""
    rng = np.random.default_rng(seed)
    trials = []
    for c, prefix in enumerate(("hc", "pd")):
        for s in range(n_subjects_per_class):
            subject = f"{prefix}{s:03d}"
            condition = "HC" if prefix == "hc" else ("PD_ON" if s % 2 == 0 else "PD_OFF")
            for t in range(trials_per_subject):
                trials.append(
                    make_trial(
                        rng,
                        subject_id=subject,
                        condition=condition,
                        task="pro" if t % 2 == 0 else "anti",
                        trial_index=t,
                    )
                )
    return TrialDataset(trials=tuple(trials), **kw)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_dataset():
    return make_dataset()


def raw_session_text(
    n=600,
    fs=300.0,
    subject="s01",
    condition="HC",
    task="pro",
    onsets=(500,),
    distance=60.0,
    amplitude=0.1,
):
    """Well-formed raw CSV text with a slow sine on all gaze channels."""
    lines = [
        "#fixation-raw v1",
        f"subject={subject},condition={condition},task={task},fs={fs:g},distance_cm={distance:g}",
        "t,lx_deg,ly_deg,rx_deg,ry_deg,event",
    ]
    onset_set = set(onsets)
    for i in range(n):
        v = amplitude * np.sin(2 * np.pi * 1.3 * i / fs)
        ev = 1 if i in onset_set else 0
        lines.append(f"{i / fs!r},{v!r},{v!r},{v!r},{v!r},{ev}")
    return "\n".join(lines) + "\n"


def raw_session_io(**kw):
    return io.StringIO(raw_session_text(**kw))

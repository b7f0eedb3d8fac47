"""One-sided CUSUM recursion, stopping rule, and restart-on-alarm monitoring loop."""

from dataclasses import dataclass
from typing import Optional

from . import features
from .errors import InvalidInput, UsageError


@dataclass(frozen=True)
class MonitorConfig:
    """drift is the full subtracted term (in-control T mean plus the c*sigma_T allowance)."""

    drift: float
    control_limit_h: float

    def __post_init__(self):
        if not self.control_limit_h > 0:
            raise InvalidInput("control_limit_h must be positive")


@dataclass(frozen=True)
class MonitorState:
    s: float = 0.0
    t: int = 0
    alarmed: bool = False


@dataclass(frozen=True)
class AlarmEvent:
    time: int
    s_at_alarm: float


def step(state, t_stat, config):
    """Advance one frame: S' = max(0, S + T - drift); alarm when S' >= H."""
    if state.alarmed:
        raise UsageError("monitor already alarmed; reset before stepping")
    s_new = max(0.0, state.s + t_stat - config.drift)
    t_new = state.t + 1
    if s_new >= config.control_limit_h:
        new_state = MonitorState(s=s_new, t=t_new, alarmed=True)
        return new_state, AlarmEvent(time=t_new, s_at_alarm=s_new)
    return MonitorState(s=s_new, t=t_new, alarmed=False), None


def _config_from_params(params):
    return MonitorConfig(
        drift=params.t_mean + params.c * params.sigma_t,
        control_limit_h=params.control_limit_h,
    )


def run(frames, model, params, trace=None) -> Optional[AlarmEvent]:
    """Run the monitor over a frame stream; return the first alarm or None.

    The alarm time counts frames from 1. ``trace``, if given, is called with
    (t, t_stat, s, alarmed) after every step.
    """
    config = _config_from_params(params)
    state = MonitorState()
    for idx, x in enumerate(frames, start=1):
        if x.shape != model.shape:
            raise InvalidInput(
                f"frame {idx} has shape {x.shape}, expected {model.shape}"
            )
        y = features.feature_vector(x, model)
        t_stat = features.t_statistic(y, params.mu0, params.cov0_chol)
        state, alarm = step(state, t_stat, config)
        if trace is not None:
            trace(state.t, t_stat, state.s, alarm is not None)
        if alarm is not None:
            return alarm
    return None


def run_with_restart(frames, model, params, trace=None):
    """Monitor with restart: after each alarm S resets to 0 and monitoring continues.

    Returned alarm times are absolute frame indices, strictly increasing.
    """
    config = _config_from_params(params)
    state = MonitorState()
    alarms = []
    for idx, x in enumerate(frames, start=1):
        if x.shape != model.shape:
            raise InvalidInput(
                f"frame {idx} has shape {x.shape}, expected {model.shape}"
            )
        y = features.feature_vector(x, model)
        t_stat = features.t_statistic(y, params.mu0, params.cov0_chol)
        state, alarm = step(state, t_stat, config)
        if trace is not None:
            trace(idx, t_stat, state.s, alarm is not None)
        if alarm is not None:
            alarms.append(AlarmEvent(time=idx, s_at_alarm=alarm.s_at_alarm))
            state = MonitorState()
    return alarms

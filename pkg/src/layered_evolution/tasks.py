"""Trial protocols and fitness functions.

Phototaxis kinds score the negated mean distance to the target light over
200 steps; learning kinds score correct minus wrong light touches over 400
steps, relocating both lights after every touch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from numba import njit

from .network import (
    Blueprint, LayeredGenome, S_CONDITIONAL, S_CONTACT0, S_FEEDBACK, S_LIGHT0, S_OBS_LEFT,
    S_ONE, _controller_step, compile_genome,
)
from .world import (
    BLOCK_OBSTACLE, BLOCK_WALL, P_FALLOFF, RAY_OFFSETS, World, WorldConfig, WorldConfigError,
    _light_response, _raycast, _relocate_lights, _step_pose, _touched_light, generate_world,
)

PHOTOTAXIS_STEPS = 200
LEARNING_STEPS = 400

COND_EXTERNAL, COND_FEEDBACK, COND_LAYER, COND_FLIP = range(4)

(ST_DISTANCE, ST_CORRECT, ST_WRONG, ST_OBSTACLE_BLOCKS, ST_WALL_BLOCKS,
 ST_RELOCATIONS, ST_STEPS) = range(7)
TRACE_COLUMNS = ("step", "x", "y", "heading", "wheel_l", "wheel_r", "feedback")


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    steps: int = 0
    target_distribution: str = "uniform"

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.steps == 0:
            object.__setattr__(self, "steps",
                               LEARNING_STEPS if self.is_learning else PHOTOTAXIS_STEPS)
        if self.steps <= 0:
            raise ValueError("task needs a positive step count")
        if self.target_distribution not in ("uniform", "biased"):
            raise ValueError(f"unknown target distribution {self.target_distribution!r}")

    @property
    def is_learning(self) -> bool:
        return self.kind.startswith("learning")

    @property
    def with_obstacles(self) -> bool:
        return self.kind.endswith("obstacles")

    @property
    def distance_based(self) -> bool:
        return not self.is_learning

    @property
    def label(self) -> str:
        if self.target_distribution == "biased":
            return f"{self.kind}-biased"
        return self.kind


TASK_KINDS = ("phototaxis", "phototaxis-obstacles", "learning", "learning-obstacles")


def task_from_name(name: str) -> TaskSpec:
    if name.endswith("-biased"):
        return TaskSpec(name[: -len("-biased")], target_distribution="biased")
    return TaskSpec(name)


@dataclass(frozen=True)
class TrialResult:
    score: float
    touches_correct: int
    touches_wrong: int
    steps_run: int
    obstacle_blocks: int = 0
    wall_blocks: int = 0
    relocations: int = 0
    target: int = 0


@njit(cache=True, nogil=True)
def _run_trial(params, pose, lights, obstacles, target, learning, cond_mode, cond_value,
               steps, rand, max_attempts, trace,
               sensors, act, n_layers, lay_off, lay_nin, lay_nact, lay_out, lay_role,
               in_src, ptr, pre, post, w, plastic_idx, sign, rule, eta, m):
    """Simulate one trial in place. Returns (status, stats).

    status 0 is success, -1 means ``rand`` ran out before the trial ended
    and -2 means light relocation hit its attempt budget.
    """
    stats = np.zeros(7)
    x = pose[0]
    y = pose[1]
    h = pose[2]
    falloff = params[P_FALLOFF]
    touch = -1
    flipped = False
    rpos = 0
    record = trace.shape[0] > 0
    for t in range(steps):
        sensors[S_LIGHT0] = _light_response(x, y, h, lights[0, 0], lights[0, 1], falloff)
        sensors[S_LIGHT0 + 1] = _light_response(x, y, h, lights[1, 0], lights[1, 1], falloff)
        for k in range(3):
            sensors[S_OBS_LEFT + k] = _raycast(x, y, h, RAY_OFFSETS[k], params, obstacles)
        sensors[S_CONTACT0] = 0.0
        sensors[S_CONTACT0 + 1] = 0.0
        fb = 0.0
        if touch >= 0:
            sensors[S_CONTACT0 + touch] = 1.0
            fb = 1.0 if touch == target else -1.0
        sensors[S_FEEDBACK] = fb
        sensors[S_ONE] = 1.0
        if cond_mode == COND_EXTERNAL:
            sensors[S_CONDITIONAL] = cond_value
        elif cond_mode == COND_FEEDBACK:
            sensors[S_CONDITIONAL] = fb
        elif cond_mode == COND_FLIP:
            if fb < 0.0:
                flipped = True
            sensors[S_CONDITIONAL] = 1.0 if flipped else 0.0

        left, right = _controller_step(sensors, act, n_layers, lay_off, lay_nin, lay_nact,
                                       lay_out, lay_role, in_src, ptr, pre, post, w,
                                       plastic_idx, sign, rule, eta, m)
        x, y, h, blocked = _step_pose(x, y, h, left, right, params, obstacles)
        if blocked == BLOCK_OBSTACLE:
            stats[ST_OBSTACLE_BLOCKS] += 1
        elif blocked == BLOCK_WALL:
            stats[ST_WALL_BLOCKS] += 1

        touch = -1
        if learning:
            touch = _touched_light(x, y, lights, params)
            if touch >= 0:
                if touch == target:
                    stats[ST_CORRECT] += 1
                else:
                    stats[ST_WRONG] += 1
                rpos = _relocate_lights(lights, x, y, params, obstacles, rand, rpos,
                                        max_attempts)
                if rpos < 0:
                    return rpos, stats
                stats[ST_RELOCATIONS] += 1
        else:
            dx = lights[target, 0] - x
            dy = lights[target, 1] - y
            stats[ST_DISTANCE] += math.sqrt(dx * dx + dy * dy)
        if record:
            trace[t, 0] = t
            trace[t, 1] = x
            trace[t, 2] = y
            trace[t, 3] = h
            trace[t, 4] = left
            trace[t, 5] = right
            trace[t, 6] = fb
        stats[ST_STEPS] += 1
    return 0, stats


def trial_streams(trial_seed) -> tuple[np.random.SeedSequence, ...]:
    """World, relocation and plasticity-init streams derived from one trial seed.

    Children are built from the seed's key rather than with ``spawn``, which
    advances a counter on the parent and would make repeated calls disagree.
    """
    if not isinstance(trial_seed, np.random.SeedSequence):
        trial_seed = np.random.SeedSequence(trial_seed)
    return tuple(np.random.SeedSequence(trial_seed.entropy,
                                        spawn_key=tuple(trial_seed.spawn_key) + (k,),
                                        pool_size=trial_seed.pool_size)
                 for k in range(3))


def make_trial_world(task: TaskSpec, trial_seed, config: Optional[WorldConfig] = None) -> World:
    world_seq = trial_streams(trial_seed)[0]
    return generate_world(np.random.default_rng(world_seq), task.with_obstacles, config,
                          task.target_distribution)


def _blueprint(controller) -> Blueprint:
    if isinstance(controller, Blueprint):
        return controller
    if isinstance(controller, LayeredGenome):
        return compile_genome(controller)
    raise TypeError("controller must be a LayeredGenome or a compiled Blueprint")


def _cond_mode(bp: Blueprint, task: TaskSpec, scripted_flip: bool) -> int:
    if scripted_flip:
        if bp.has_learning_layer or bp.is_monolithic:
            raise ValueError("the scripted flip drives the conditional of a layer-1/2 stack")
        return COND_FLIP
    if bp.has_learning_layer:
        if not task.is_learning:
            raise ValueError("phototaxis trials need a controller without a learning layer")
        return COND_LAYER
    if task.is_learning:
        if bp.is_monolithic:
            return COND_FEEDBACK
        raise ValueError("learning trials need a learning layer or a monolithic network")
    return COND_EXTERNAL


def simulate(controller: Union[LayeredGenome, Blueprint], task: TaskSpec, trial_seed,
             config: Optional[WorldConfig] = None, world: Optional[World] = None,
             scripted_flip: bool = False, trace: bool = False):
    """Run one trial; returns a :class:`TrialResult` (and the trace array if asked).

    ``world`` lets callers share one generated world across many controllers;
    it must be the world :func:`make_trial_world` builds for ``trial_seed``.
    """
    bp = _blueprint(controller)
    cfg = config or (world.config if world is not None else WorldConfig())
    mode = _cond_mode(bp, task, scripted_flip)
    _, reloc_seq, plastic_seq = trial_streams(trial_seed)
    if world is None:
        world = make_trial_world(task, trial_seed, cfg)
    params = cfg.as_array()
    pose = world.pose_array()
    obstacles = world.obstacle_array()
    target = world.target_light
    cond_value = float(target)
    n_rand = 256 if task.is_learning else 0
    while True:
        state = bp.instantiate(np.random.default_rng(plastic_seq))
        rand = np.random.default_rng(reloc_seq).random(n_rand)
        lights = world.light_array()
        trace_buf = np.zeros((task.steps if trace else 0, len(TRACE_COLUMNS)))
        status, stats = _run_trial(params, pose, lights, obstacles, target, task.is_learning,
                                   mode, cond_value, task.steps, rand, cfg.max_attempts,
                                   trace_buf, *state.kernel_args())
        if status == 0:
            break
        if status == -2:
            raise WorldConfigError("arena too crowded: light relocation failed")
        n_rand *= 4

    correct, wrong = int(stats[ST_CORRECT]), int(stats[ST_WRONG])
    if task.is_learning:
        score = float(correct - wrong)
    else:
        score = -float(stats[ST_DISTANCE]) / task.steps
    result = TrialResult(score, correct, wrong, int(stats[ST_STEPS]),
                         int(stats[ST_OBSTACLE_BLOCKS]), int(stats[ST_WALL_BLOCKS]),
                         int(stats[ST_RELOCATIONS]), target)
    if trace:
        return result, trace_buf
    return result


def run_phototaxis_trial(controller, with_obstacles: bool, trial_seed,
                         config: Optional[WorldConfig] = None) -> TrialResult:
    task = TaskSpec("phototaxis-obstacles" if with_obstacles else "phototaxis")
    return simulate(controller, task, trial_seed, config)


def run_learning_trial(controller, with_obstacles: bool, target_distribution: str,
                       trial_seed, config: Optional[WorldConfig] = None) -> TrialResult:
    task = TaskSpec("learning-obstacles" if with_obstacles else "learning",
                    target_distribution=target_distribution)
    return simulate(controller, task, trial_seed, config)


def run_flip_oracle_trial(lower_layers: LayeredGenome, task: TaskSpec, trial_seed,
                          config: Optional[WorldConfig] = None) -> TrialResult:
    """Learning trial where a script replaces layer 3.

    The script asks layers 1-2 for light 0 until the first wrong-light
    feedback, then for light 1 for the rest of the trial.
    """
    if not task.is_learning:
        raise ValueError("the flip oracle is a learning-task baseline")
    return simulate(lower_layers.truncated(min(2, len(lower_layers.layers))), task,
                    trial_seed, config, scripted_flip=True)

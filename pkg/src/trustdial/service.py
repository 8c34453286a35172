"""JSON-over-HTTP sessions: a human plays the game against any policy.

The service keeps one game per session. Each exchange follows the same
contract as the simulator: the policy announces its act for the current
step, the client resolves it (select / accept / reject / continue), and
the server applies the exchange, updates the dialog state, and returns
the next step. Sub-dialog moves (help, asking to hear the suggestion)
do not advance the game.

Trust for the policy's next decision comes from the client's optional
per-exchange self-report; without one, a feature-based estimator is
consulted if available, else the previous estimate carries over.

Endpoints: POST /sessions, POST /sessions/{id}/action,
GET /sessions/{id}/log, GET /policies, GET /health. Errors are
{"code", "message"} with conventional status codes.
"""

from __future__ import annotations

import secrets
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .game import (
    Game,
    GameError,
    GameState,
    ProactiveAction,
    UserAction,
    apply_exchange,
    best_option,
    build_game,
    help_text,
    new_game_state,
)
from .policies import (
    DialogState,
    INITIAL_DURATION_S,
    INITIAL_SUCCESS,
    INITIAL_TRUST_EST,
    Policy,
    rule_based_policy,
    static_policy,
)
from .trust import Estimator, make_exchange_record
from .users import PopulationConfig, sample_user

HUMAN_DURATION_MIN_S = 1.0
HUMAN_DURATION_MAX_S = 600.0

AGENT_MESSAGES = {
    ProactiveAction.NONE: None,
    ProactiveAction.NOTIFICATION: "I have a suggestion for this step if you want it.",
    ProactiveAction.SUGGESTION: "I suggest taking {option}.",
    ProactiveAction.INTERVENTION: "Based on your earlier choices I am taking {option}.",
}


@dataclass
class Session:
    session_id: str
    policy_name: str
    policy: Policy
    game: Game
    state: GameState = field(default_factory=new_game_state)
    dialog: Optional[DialogState] = None
    pending_action: Optional[ProactiveAction] = None
    pending_suggestion: Optional[int] = None
    suggestion_revealed: bool = False
    asked_help: bool = False
    trust_reports: dict[int, int] = field(default_factory=dict)
    trust_estimates: dict[int, int] = field(default_factory=dict)
    created_at: float = field(default_factory=time.monotonic)
    last_active: float = field(default_factory=time.monotonic)
    step_started: float = field(default_factory=time.monotonic)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def terminal(self) -> bool:
        return self.state.terminal


class SessionStore:
    """In-process session map; per-session locks serialize exchanges."""

    def __init__(self, idle_timeout_s: float = 3600.0):
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self.idle_timeout_s = idle_timeout_s

    def add(self, session: Session) -> None:
        with self._lock:
            self._purge()
            self._sessions[session.session_id] = session

    def get(self, session_id: str) -> Session:
        with self._lock:
            self._purge()
            session = self._sessions.get(session_id)
        if session is None:
            raise HTTPException(404, detail={"code": "unknown_session",
                                             "message": f"no session {session_id}"})
        return session

    def _purge(self) -> None:
        now = time.monotonic()
        dead = [sid for sid, s in self._sessions.items()
                if now - s.last_active > self.idle_timeout_s]
        for sid in dead:
            del self._sessions[sid]


class CreateSessionRequest(BaseModel):
    policy: str
    seed: int = 0


class ActionRequest(BaseModel):
    step_index: int
    action: str  # select | accept | reject_select | help | request_suggestion | continue
    option: Optional[int] = None
    trust_report: Optional[int] = Field(default=None, ge=1, le=5)


def _agent_payload(session: Session) -> dict:
    action = session.pending_action
    payload = {"action": action.label, "message": None, "suggested_option": None}
    if action is ProactiveAction.NONE:
        return payload
    step = session.game.step(session.state.current_step)
    option = session.pending_suggestion
    label = step.options[option]
    if action is ProactiveAction.NOTIFICATION:
        payload["message"] = AGENT_MESSAGES[action]
        payload["suggested_option"] = option
    else:
        payload["message"] = AGENT_MESSAGES[action].format(option=label)
        payload["suggested_option"] = option
    return payload


def _step_payload(session: Session) -> dict:
    if session.terminal:
        return {
            "terminal": True,
            "cumulative_score": session.state.cumulative_score,
            "step": None,
            "agent": None,
        }
    step = session.game.step(session.state.current_step)
    return {
        "terminal": False,
        "cumulative_score": session.state.cumulative_score,
        "step": {
            "index": step.index,
            "name": step.name,
            "options": list(step.options),
            "complexity": step.complexity,
            "n_steps": len(session.game.steps),
        },
        "agent": _agent_payload(session),
    }


def _log_payload(session: Session) -> dict:
    exchanges = []
    for outcome in session.state.exchange_log:
        exchanges.append(
            {
                "step_index": outcome.step_index,
                "agent_action": outcome.agent_action.label,
                "chosen_option": outcome.chosen_option,
                "score": outcome.score,
                "duration_s": outcome.duration_s,
                "asked_help": outcome.user_asked_help,
                "requested_suggestion": outcome.user_requested_suggestion,
                "trust_report": session.trust_reports.get(outcome.step_index),
                "trust_estimate": session.trust_estimates.get(outcome.step_index),
            }
        )
    return {
        "session_id": session.session_id,
        "policy": session.policy_name,
        "game_seed": session.game.seed,
        "terminal": session.terminal,
        "cumulative_score": session.state.cumulative_score,
        "selections": {str(k): v for k, v in sorted(session.state.selections.items())},
        "exchanges": exchanges,
    }


def _advance_agent(session: Session) -> None:
    """Ask the policy for its act on the (new) current step."""
    if session.terminal:
        session.pending_action = None
        session.pending_suggestion = None
        return
    step = session.game.step(session.state.current_step)
    session.dialog = DialogState(
        step_index=step.index,
        complexity=step.complexity,
        trust_est=session.dialog.trust_est if session.dialog else INITIAL_TRUST_EST,
        last_success=session.dialog.last_success if session.dialog else INITIAL_SUCCESS,
        last_duration_s=session.dialog.last_duration_s if session.dialog else INITIAL_DURATION_S,
    )
    session.pending_action = session.policy.decide(session.dialog)
    session.pending_suggestion = best_option(session.state, step)
    session.suggestion_revealed = session.pending_action in (
        ProactiveAction.SUGGESTION,
        ProactiveAction.INTERVENTION,
        ProactiveAction.NOTIFICATION,
    )
    session.asked_help = False
    session.step_started = time.monotonic()


def build_app(
    game: Optional[Game] = None,
    policies: Optional[dict[str, Policy]] = None,
    estimator: Optional[Estimator] = None,
    estimator_profile_seed: int = 0,
    idle_timeout_s: float = 3600.0,
) -> FastAPI:
    """Assemble the service; policies default to the five baselines."""
    app = FastAPI(title="trustdial play service")
    store = SessionStore(idle_timeout_s=idle_timeout_s)
    base_game = game if game is not None else build_game(0)
    available: dict[str, Policy] = policies or {}
    if not available:
        available = {
            p.name: p
            for p in (
                static_policy(ProactiveAction.NONE),
                static_policy(ProactiveAction.NOTIFICATION),
                static_policy(ProactiveAction.SUGGESTION),
                static_policy(ProactiveAction.INTERVENTION),
                rule_based_policy(),
            )
        }
    # profile stand-in for feature-based estimation of anonymous players
    fallback_profile = sample_user(estimator_profile_seed, PopulationConfig()).profile
    est_rng = np.random.default_rng(estimator_profile_seed)

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/policies")
    def list_policies():
        return {"policies": sorted(available)}

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        if req.policy not in available:
            raise HTTPException(404, detail={"code": "unknown_policy",
                                             "message": f"no policy {req.policy!r}"})
        session = Session(
            session_id=secrets.token_hex(12),
            policy_name=req.policy,
            policy=available[req.policy],
            game=build_game(req.seed),
        )
        _advance_agent(session)
        if session.pending_action is ProactiveAction.INTERVENTION:
            # an intervention opener resolves step 1 before the first reply
            _resolve(session, UserAction.proceed(), duration_s=HUMAN_DURATION_MIN_S,
                     trust_report=None)
        store.add(session)
        payload = _step_payload(session)
        payload["session_id"] = session.session_id
        payload["policy"] = session.policy_name
        if session.state.exchange_log:
            payload["resolved"] = _log_payload(session)["exchanges"]
        return payload

    def _resolve(session: Session, user_action: UserAction, duration_s: float,
                 trust_report: Optional[int]) -> None:
        step = session.game.step(session.state.current_step)
        session.state, outcome = apply_exchange(
            session.game,
            session.state,
            session.pending_action,
            user_action,
            duration_s,
            asked_help=session.asked_help,
        )
        if trust_report is not None:
            session.trust_reports[outcome.step_index] = trust_report
            trust_est = trust_report
        elif estimator is not None:
            record = make_exchange_record(fallback_profile, step, outcome)
            trust_est = estimator.estimate(record, None, est_rng)
        else:
            trust_est = session.dialog.trust_est if session.dialog else INITIAL_TRUST_EST
        session.trust_estimates[outcome.step_index] = trust_est
        session.dialog = DialogState(
            step_index=min(outcome.step_index + 1, 12),
            complexity=session.game.step(min(outcome.step_index + 1, 12)).complexity,
            trust_est=trust_est,
            last_success=outcome.score,
            last_duration_s=outcome.duration_s,
        )
        _advance_agent(session)

    @app.post("/sessions/{session_id}/action")
    def submit_action(session_id: str, req: ActionRequest):
        session = store.get(session_id)
        with session.lock:
            session.last_active = time.monotonic()
            if session.terminal:
                raise HTTPException(409, detail={"code": "terminal",
                                                 "message": "game is finished"})
            current = session.state.current_step
            if req.step_index != current:
                raise HTTPException(409, detail={
                    "code": "conflict",
                    "message": f"exchange for step {req.step_index} already resolved "
                               f"(current step is {current})",
                })
            step = session.game.step(current)
            agent_act = session.pending_action

            if req.action == "help":
                session.asked_help = True
                return {"help": help_text(session.game, step),
                        **_step_payload(session)}
            if req.action == "request_suggestion":
                if agent_act is not ProactiveAction.NONE:
                    raise HTTPException(400, detail={
                        "code": "invalid_action",
                        "message": "the agent already made a suggestion"})
                session.suggestion_revealed = True
                option = session.pending_suggestion
                return {
                    "suggestion": {
                        "option": option,
                        "message": AGENT_MESSAGES[ProactiveAction.SUGGESTION].format(
                            option=step.options[option]),
                    },
                    **_step_payload(session),
                }

            duration = min(
                max(time.monotonic() - session.step_started, HUMAN_DURATION_MIN_S),
                HUMAN_DURATION_MAX_S,
            )
            try:
                if req.action == "select":
                    if agent_act is ProactiveAction.NONE and session.suggestion_revealed:
                        user_action = UserAction.reject_then_select(_opt(req, step))
                    else:
                        user_action = UserAction.select(_opt(req, step))
                elif req.action == "accept":
                    if not session.suggestion_revealed:
                        raise HTTPException(400, detail={
                            "code": "invalid_action",
                            "message": "no suggestion on the table"})
                    user_action = UserAction.accept()
                elif req.action == "reject_select":
                    user_action = UserAction.reject_then_select(_opt(req, step))
                elif req.action == "continue":
                    user_action = UserAction.proceed()
                else:
                    raise HTTPException(400, detail={
                        "code": "invalid_action",
                        "message": f"unknown action {req.action!r}"})
                _resolve(session, user_action, duration, req.trust_report)
            except GameError as exc:
                raise HTTPException(400, detail={"code": "invalid_action",
                                                 "message": str(exc)}) from exc
            payload = _step_payload(session)
            payload["last_outcome"] = _log_payload(session)["exchanges"][-1]
            if session.terminal:
                payload["log"] = _log_payload(session)
            return payload

    @app.get("/sessions/{session_id}/log")
    def get_log(session_id: str):
        session = store.get(session_id)
        with session.lock:
            session.last_active = time.monotonic()
            return _log_payload(session)

    def _opt(req: ActionRequest, step) -> int:
        if req.option is None or not 0 <= req.option < step.n_options:
            raise HTTPException(400, detail={
                "code": "invalid_option",
                "message": f"option must be one of 0..{step.n_options - 1}"})
        return req.option

    return app


def serve(app: FastAPI, host: str = "127.0.0.1", port: int = 8080) -> None:
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="warning")

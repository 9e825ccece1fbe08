"""HTTP service running the live human-classification protocol.

A study loads a manifest, opens its clips' reduction trees at level 0, and
deals test nodes into stimulus sets such that no set (hence no participant)
ever contains two crops of the same source video.  Sessions walk a fixed,
seeded trial order: practice trials first, then the main trials with catch
trials interspersed.  Once both catch responses are in, they are scored and
the participant is excluded on failure; excluded participants' responses
never reach node accuracies.

Advancing a clip requires every active node to have met its response quota;
accuracies then drive the overlap-pruned expansion of the next level.  When
a clip's spatial frontier dies out, MIRCs are labelled and their temporally
scrambled variants are enqueued for the spatiotemporal phase.

All study mutations are serialised through a per-study lock and appended to
a crash-safe event log; progress reads work on the live state.
"""

from __future__ import annotations

import io
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel

from . import rng, scoring
from .dataset import (
    ClipRole,
    DatasetManifest,
    EmbeddingTable,
    ResponseRecord,
    TrialKind,
    load_dictionary,
    load_manifest,
)
from .eventlog import EventLog, write_snapshot
from .geometry import CropRect
from .reduction import (
    MircRole,
    ReductionConfig,
    ReductionTree,
    expand_level,
    label_mircs,
)
from .scoring import ScoringConfig, SpellCorrector, node_accuracy, score_response
from .scramble import attach_scrambled_variant, materialize


@dataclass
class StudyConfig:
    set_size: int = 36
    practice_count: int = 5
    catch_count: int = 2
    response_quota: int = 20
    catch_pass_rule: str = "both"  # "both" or "any"
    fixation_ms: int = 500
    prompt_delay_ms: int = 4000
    loop_playback: bool = True
    scramble_blocks: int = 5
    seed: int = 0
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    reduction: ReductionConfig = field(default_factory=ReductionConfig)

    @classmethod
    def from_dict(cls, d: Mapping) -> "StudyConfig":
        kwargs = dict(d)
        if "scoring" in kwargs:
            kwargs["scoring"] = ScoringConfig.from_dict(kwargs["scoring"])
        if "reduction" in kwargs:
            kwargs["reduction"] = ReductionConfig(**kwargs["reduction"])
        cfg = cls(**kwargs)
        if cfg.catch_pass_rule not in ("both", "any"):
            raise ValueError(f"catch_pass_rule must be both|any, not {cfg.catch_pass_rule}")
        return cfg


@dataclass
class Trial:
    kind: TrialKind
    node_id: str


@dataclass
class Session:
    session_id: str
    participant_id: str
    set_index: int
    seed: int
    trials: list[Trial]
    cursor: int = 0
    excluded: bool = False

    @property
    def done(self) -> bool:
        return self.cursor >= len(self.trials)

    def current(self) -> Trial:
        return self.trials[self.cursor]


@dataclass
class StimulusSet:
    nodes: list[str] = field(default_factory=list)
    clip_ids: set[str] = field(default_factory=set)
    sessions: int = 0


@dataclass
class StoredResponse:
    session_id: str
    record: ResponseRecord
    scored: scoring.ScoredResponse
    flags: list[str]


def build_trial_order(
    seed: int,
    main_nodes: list[str],
    practice_nodes: list[str],
    catch_nodes: list[str],
) -> list[Trial]:
    """Fixed session trial order: practice, then seeded-shuffled main trials
    with the catch trials spliced in at seeded positions."""
    gen = rng.generator(seed)
    order = [main_nodes[int(i)] for i in gen.permutation(len(main_nodes))]
    merged = [Trial(TrialKind.MAIN, n) for n in order]
    for catch in catch_nodes:
        pos = int(gen.integers(0, len(merged) + 1))
        merged.insert(pos, Trial(TrialKind.CATCH, catch))
    return [Trial(TrialKind.PRACTICE, n) for n in practice_nodes] + merged


class Study:
    def __init__(
        self,
        study_id: str,
        manifest: DatasetManifest,
        config: StudyConfig,
        data_dir: Path,
    ):
        self.study_id = study_id
        self.manifest = manifest
        self.config = config
        self.lock = threading.Lock()
        self.data_dir = data_dir
        self.log = EventLog(data_dir / "events.jsonl")

        test_clips = manifest.clips_by_role(ClipRole.TEST)
        practice = manifest.clips_by_role(ClipRole.PRACTICE)
        catch = manifest.clips_by_role(ClipRole.CATCH)
        if not test_clips:
            raise ValueError("study needs at least one test clip")
        if len(practice) < config.practice_count:
            raise ValueError(
                f"need {config.practice_count} practice clips, manifest has {len(practice)}"
            )
        if len(catch) < config.catch_count:
            raise ValueError(
                f"need {config.catch_count} catch clips, manifest has {len(catch)}"
            )

        def root_tree(clip) -> ReductionTree:
            return ReductionTree(clip.clip_id, CropRect(0, 0, clip.width, clip.height))

        self.aux_trees: dict[str, ReductionTree] = {
            c.clip_id: root_tree(c)
            for c in practice[: config.practice_count] + catch[: config.catch_count]
        }
        self.practice_nodes = [
            self.aux_trees[c.clip_id].root_id for c in practice[: config.practice_count]
        ]
        self.catch_nodes = [
            self.aux_trees[c.clip_id].root_id for c in catch[: config.catch_count]
        ]

        self.trees: dict[str, ReductionTree] = {}
        self.current_level: dict[str, int] = {}
        self.active_nodes: dict[str, list[str]] = {}
        for clip in test_clips:
            tree = root_tree(clip)
            self.trees[clip.clip_id] = tree
            self.current_level[clip.clip_id] = 0
            self.active_nodes[clip.clip_id] = [tree.root_id]

        self.sets: list[StimulusSet] = []
        self._place_nodes([self.trees[c.clip_id].root_id for c in test_clips])

        self.sessions: dict[str, Session] = {}
        self.responses: dict[tuple[str, str], StoredResponse] = {}
        self._session_counter = 0

        if manifest.sentence_embeddings_path is None or manifest.word_embeddings_path is None:
            raise ValueError("manifest must declare sentence and word embedding tables")
        self.sentence_table = EmbeddingTable.from_csv(
            manifest.sentence_embeddings_path, name="sentence"
        )
        self.word_table = EmbeddingTable.from_csv(manifest.word_embeddings_path, name="word")
        if manifest.dictionary_path is not None:
            freqs = load_dictionary(manifest.dictionary_path)
        else:
            freqs = {w: 1 for text in self.word_table.vectors for w in text.split()}
        self.corrector = SpellCorrector(freqs, config.scoring.spell_max_edit_distance)
        self.scramble_plans: dict[str, object] = {}

        self.log.append("study_created", {"study_id": study_id, "clips": len(test_clips)})

    # -- construction helpers -------------------------------------------------

    def _place_nodes(self, node_ids: list[str]) -> None:
        """Deal nodes into stimulus sets, one node per source clip per set."""

        def sort_key(nid: str):
            clip = self.manifest.clips[nid.split("/")[0]]
            return (clip.split.value, clip.verb_class, nid)

        for nid in sorted(node_ids, key=sort_key):
            clip_id = nid.split("/")[0]
            for s in self.sets:
                if clip_id not in s.clip_ids and len(s.nodes) < self.config.set_size:
                    s.nodes.append(nid)
                    s.clip_ids.add(clip_id)
                    break
            else:
                self.sets.append(StimulusSet(nodes=[nid], clip_ids={clip_id}))

    # -- protocol -------------------------------------------------------------

    def node_clip(self, node_id: str):
        return self.manifest.clips[node_id.split("/")[0]]

    def node_lookup(self, node_id: str):
        clip_id = node_id.split("/")[0]
        tree = self.trees.get(clip_id) or self.aux_trees.get(clip_id)
        if tree is None or node_id not in tree.nodes:
            raise KeyError(node_id)
        return tree.nodes[node_id]

    def _responses_per_node(self, node_id: str) -> list[StoredResponse]:
        out = []
        for stored in self.responses.values():
            if stored.record.node_id != node_id:
                continue
            if stored.record.trial_kind != TrialKind.MAIN:
                continue
            if self.sessions[stored.session_id].excluded:
                continue
            out.append(stored)
        return out

    def _set_needs_responses(self, s: StimulusSet) -> bool:
        return any(
            len(self._responses_per_node(nid)) < self.config.response_quota
            for nid in s.nodes
        )

    def create_session(self, participant_id: str | None) -> Session:
        open_sets = [(i, s) for i, s in enumerate(self.sets) if self._set_needs_responses(s)]
        if not open_sets:
            raise HTTPException(status_code=409, detail="no stimulus set needs responses")
        idx, chosen = min(open_sets, key=lambda t: (t[1].sessions, t[0]))
        self._session_counter += 1
        sid = f"s{self._session_counter:04d}"
        pid = participant_id or f"p{self._session_counter:04d}"
        seed = rng.derive_seed(self.config.seed, "session", sid)
        session = Session(
            session_id=sid,
            participant_id=pid,
            set_index=idx,
            seed=seed,
            trials=build_trial_order(seed, chosen.nodes, self.practice_nodes, self.catch_nodes),
        )
        chosen.sessions += 1
        self.sessions[sid] = session
        self.log.append(
            "session_created",
            {"session_id": sid, "participant_id": pid, "set_index": idx, "seed": seed},
        )
        return session

    def submit(self, session: Session, node_id: str, raw_text: str, response_time_ms: int):
        if session.excluded:
            raise HTTPException(status_code=409, detail="participant excluded")
        if session.done:
            raise HTTPException(status_code=409, detail="session complete")
        current = session.current()
        if node_id != current.node_id:
            if any(t.node_id == node_id for t in session.trials[: session.cursor]):
                raise HTTPException(
                    status_code=409, detail=f"response for {node_id} already recorded"
                )
            raise HTTPException(
                status_code=409,
                detail=f"out of order: current trial is {current.node_id}",
            )
        record = ResponseRecord(
            participant_id=session.participant_id,
            node_id=node_id,
            trial_kind=current.kind,
            response_time_ms=response_time_ms,
            raw_text=raw_text,
        )
        clip = self.node_clip(node_id)
        scored = score_response(
            session.participant_id,
            node_id,
            raw_text,
            clip.gt_label,
            self.sentence_table,
            self.word_table,
            self.config.scoring,
            self.corrector,
        )
        flags = []
        if response_time_ms < self.config.prompt_delay_ms:
            flags.append("before_prompt")
        self.responses[(session.session_id, node_id)] = StoredResponse(
            session_id=session.session_id, record=record, scored=scored, flags=flags
        )
        session.cursor += 1
        self.log.append(
            "response_submitted",
            {
                "session_id": session.session_id,
                "node_id": node_id,
                "trial_kind": current.kind.value,
                "correct": scored.correct,
                "response_time_ms": response_time_ms,
                "flags": flags,
            },
        )
        if current.kind == TrialKind.CATCH:
            self._maybe_evaluate_catches(session)

    def _maybe_evaluate_catches(self, session: Session) -> None:
        answered = [
            self.responses[(session.session_id, t.node_id)]
            for t in session.trials
            if t.kind == TrialKind.CATCH
            and (session.session_id, t.node_id) in self.responses
        ]
        if len(answered) < self.config.catch_count:
            return
        passed = [r.scored.correct for r in answered]
        ok = all(passed) if self.config.catch_pass_rule == "both" else any(passed)
        if not ok:
            session.excluded = True
            self.log.append(
                "participant_excluded",
                {"session_id": session.session_id, "catch_results": passed},
            )

    def advance(self, clip_id: str) -> dict:
        if clip_id not in self.trees:
            raise HTTPException(status_code=404, detail=f"unknown clip {clip_id}")
        tree = self.trees[clip_id]
        active = self.active_nodes[clip_id]
        if not active:
            raise HTTPException(status_code=409, detail=f"{clip_id} already finished")
        per_node = {nid: self._responses_per_node(nid) for nid in active}
        short = {
            nid: len(rs) for nid, rs in per_node.items() if len(rs) < self.config.response_quota
        }
        if short:
            raise HTTPException(
                status_code=409,
                detail={"not_ready": {n: c for n, c in sorted(short.items())}},
            )
        accuracies = {
            nid: node_accuracy([r.scored for r in rs]) for nid, rs in per_node.items()
        }
        threshold = self.config.reduction.recognition_threshold
        result: dict = {"clip_id": clip_id, "activated": [], "mircs": [], "done": False}

        scrambled_phase = all(tree.nodes[nid].is_scrambled for nid in active)
        if scrambled_phase:
            for nid in active:
                tree.nodes[nid].mark_tested(accuracies[nid])
            self.active_nodes[clip_id] = []
            result["done"] = True
        else:
            level = self.current_level[clip_id]
            selected = expand_level(tree, level, accuracies, self.config.reduction)
            if selected:
                self.current_level[clip_id] = level + 1
                self.active_nodes[clip_id] = [n.node_id for n in selected]
                self._place_nodes([n.node_id for n in selected])
                result["activated"] = [n.node_id for n in selected]
            else:
                report = label_mircs(tree, threshold=threshold)
                result["mircs"] = report.mircs
                clip = self.manifest.clips[clip_id]
                scrambled_ids = []
                for mirc_id in report.mircs:
                    seed = rng.derive_seed(self.config.seed, "scramble", mirc_id)
                    node, plan = attach_scrambled_variant(
                        tree,
                        mirc_id,
                        clip.frame_count,
                        seed,
                        self.config.scramble_blocks,
                    )
                    self.scramble_plans[node.node_id] = plan
                    scrambled_ids.append(node.node_id)
                if scrambled_ids:
                    self.active_nodes[clip_id] = scrambled_ids
                    self._place_nodes(scrambled_ids)
                    result["activated"] = scrambled_ids
                    self.log.append(
                        "scramble_enqueued", {"clip_id": clip_id, "nodes": scrambled_ids}
                    )
                else:
                    self.active_nodes[clip_id] = []
                    result["done"] = True
        self.log.append("level_advanced", result)
        write_snapshot(self.data_dir / "state.json", self.progress())
        return result

    def progress(self) -> dict:
        clips = {}
        for clip_id, tree in sorted(self.trees.items()):
            active = self.active_nodes[clip_id]
            clips[clip_id] = {
                "current_level": self.current_level[clip_id],
                "active_nodes": {
                    nid: len(self._responses_per_node(nid)) for nid in active
                },
                "done": not active,
                "mircs": [
                    n.node_id for n in tree.nodes.values() if n.mirc_role == MircRole.MIRC
                ],
            }
        return {
            "study_id": self.study_id,
            "clips": clips,
            "sessions": {
                sid: {
                    "participant_id": s.participant_id,
                    "cursor": s.cursor,
                    "total": len(s.trials),
                    "excluded": s.excluded,
                    "done": s.done,
                }
                for sid, s in sorted(self.sessions.items())
            },
        }


# -- HTTP layer ---------------------------------------------------------------


class CreateStudyRequest(BaseModel):
    manifest: str
    config: dict = {}


class CreateParticipantRequest(BaseModel):
    participant_id: str | None = None


class SubmitResponseRequest(BaseModel):
    node_id: str
    raw_text: str
    response_time_ms: int


class AdvanceRequest(BaseModel):
    clip_id: str


def create_app(data_root: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="mirc-lab experiment service")
    root = Path(data_root) if data_root is not None else Path("mirc-lab-studies")
    studies: dict[str, Study] = {}
    counter = {"n": 0}

    def get_study(study_id: str) -> Study:
        if study_id not in studies:
            raise HTTPException(status_code=404, detail=f"unknown study {study_id}")
        return studies[study_id]

    def find_session(session_id: str) -> tuple[Study, Session]:
        for study in studies.values():
            if session_id in study.sessions:
                return study, study.sessions[session_id]
        raise HTTPException(status_code=404, detail=f"unknown session {session_id}")

    @app.post("/v1/studies")
    def create_study(req: CreateStudyRequest):
        counter["n"] += 1
        study_id = f"study{counter['n']:04d}"
        manifest = load_manifest(req.manifest)
        try:
            config = StudyConfig.from_dict(req.config)
            study = Study(study_id, manifest, config, root / study_id)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        studies[study_id] = study
        return {"study_id": study_id, "stimulus_sets": len(study.sets)}

    @app.post("/v1/studies/{study_id}/participants")
    def create_participant(study_id: str, req: CreateParticipantRequest):
        study = get_study(study_id)
        with study.lock:
            session = study.create_session(req.participant_id)
        return {
            "session_id": session.session_id,
            "participant_id": session.participant_id,
            "seed": session.seed,
            "trial_count": len(session.trials),
        }

    @app.get("/v1/sessions/{session_id}/next")
    def next_trial(session_id: str):
        study, session = find_session(session_id)
        if session.excluded:
            return {"status": "excluded"}
        if session.done:
            return {"status": "done"}
        trial = session.current()
        clip = study.node_clip(trial.node_id)
        node = study.node_lookup(trial.node_id)
        frame_count = clip.frame_count
        return {
            "status": "trial",
            "trial": {
                "node_id": trial.node_id,
                "kind": trial.kind.value,
                "index": session.cursor,
                "total": len(session.trials),
                "media": f"/v1/studies/{study.study_id}/bundle?node={trial.node_id}",
                "timing": {
                    "fixation_ms": study.config.fixation_ms,
                    "prompt_delay_ms": study.config.prompt_delay_ms,
                },
                "loop": study.config.loop_playback,
                "frame_count": frame_count,
                "rect": list(node.rect.to_tuple()),
            },
        }

    @app.post("/v1/sessions/{session_id}/responses")
    def submit_response(session_id: str, req: SubmitResponseRequest):
        study, session = find_session(session_id)
        with study.lock:
            study.submit(session, req.node_id, req.raw_text, req.response_time_ms)
        return {
            "ack": True,
            "progress": {"cursor": session.cursor, "total": len(session.trials)},
            "excluded": session.excluded,
        }

    @app.post("/v1/studies/{study_id}/advance")
    def advance(study_id: str, req: AdvanceRequest):
        study = get_study(study_id)
        with study.lock:
            return study.advance(req.clip_id)

    @app.get("/v1/studies/{study_id}/progress")
    def progress(study_id: str):
        return get_study(study_id).progress()

    @app.get("/v1/studies/{study_id}/bundle")
    def media_bundle(study_id: str, node: str):
        study = get_study(study_id)
        try:
            study.node_lookup(node)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown node {node}")
        clip = study.node_clip(node)
        urls = [
            f"/v1/studies/{study_id}/frame?node={node}&index={i}"
            for i in range(clip.frame_count)
        ]
        return {"frame_urls": urls, "fps": clip.fps, "loop": study.config.loop_playback}

    @app.get("/v1/studies/{study_id}/frame")
    def media_frame(study_id: str, node: str, index: int):
        from PIL import Image

        study = get_study(study_id)
        try:
            qnode = study.node_lookup(node)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown node {node}")
        clip = study.node_clip(node)
        if not 0 <= index < clip.frame_count:
            raise HTTPException(status_code=404, detail="frame index out of range")
        source_index = index
        if qnode.is_scrambled:
            plan = study.scramble_plans.get(node)
            if plan is None:
                raise HTTPException(status_code=409, detail="no scramble plan for node")
            source_index = materialize(clip.frame_count, plan)[index]
        img = Image.open(clip.frame_dir / clip.frames[source_index])
        r = qnode.rect
        crop = img.crop((r.x, r.y, r.x2, r.y2))
        buf = io.BytesIO()
        crop.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    app.state.studies = studies
    return app

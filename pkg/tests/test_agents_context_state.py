import json

import pytest

from autoduct.agents.context import (STANDARD_ROLES, ProjectContext,
                                     _DEFAULT_LAYOUT)
from autoduct.agents.state import (STAGE_ORDER, STATE_FORMAT_VERSION,
                                   WorkflowState, load_state, persist_state)
from autoduct.errors import CorruptState, UnboundRole, VersionMismatch


# --- role registry --------------------------------------------------------------

def test_create_binds_standard_layout(tmp_path):
    ctx = ProjectContext.create(tmp_path, run_id="r1")
    assert set(ctx.roles()) == set(STANDARD_ROLES)
    for role, rel in _DEFAULT_LAYOUT.items():
        assert ctx.path(role) == tmp_path.resolve() / rel


def test_context_requires_existing_directory(tmp_path):
    with pytest.raises(ValueError):
        ProjectContext(tmp_path / "missing", run_id="x")


def test_bind_rejects_rebinding(tmp_path):
    ctx = ProjectContext(tmp_path, run_id="x")
    ctx.bind("dataset_file", tmp_path / "a.csv")
    with pytest.raises(ValueError, match="already bound"):
        ctx.bind("dataset_file", tmp_path / "b.csv")


def test_bind_rejects_escaping_paths(tmp_path):
    ws = tmp_path / "ws"
    ws.mkdir()
    ctx = ProjectContext(ws, run_id="x")
    with pytest.raises(ValueError, match="outside the workspace"):
        ctx.bind("dataset_file", tmp_path / "outside.csv")
    with pytest.raises(ValueError, match="outside the workspace"):
        ctx.bind("report_dir", ws / ".." / "sneaky")
    with pytest.raises(ValueError, match="outside the workspace"):
        ctx.bind("model_spec", "/etc/passwd")


def test_contains_resolves_traversals(tmp_path):
    ws = tmp_path / "ws"
    ws.mkdir()
    ctx = ProjectContext(ws, run_id="x")
    assert ctx.contains(ws)
    assert ctx.contains(ws / "deep" / "nested" / "file.json")
    assert not ctx.contains(tmp_path)
    assert not ctx.contains(ws / ".." / "ws2")
    # prefix collision: /a/ws-evil is not inside /a/ws
    assert not ctx.contains(str(ws) + "-evil/file")


def test_unbound_role_error(tmp_path):
    ctx = ProjectContext(tmp_path, run_id="x")
    with pytest.raises(UnboundRole):
        ctx.path("dataset_file")
    assert not ctx.is_bound("dataset_file")


def test_roles_snapshot_sorted(tmp_path):
    ctx = ProjectContext.create(tmp_path, run_id="r")
    names = list(ctx.roles())
    assert names == sorted(names)


# --- workflow state ---------------------------------------------------------------

def test_stage_order():
    assert STAGE_ORDER == ("model_generation", "training_execution",
                           "evaluation_execution", "report_synthesis")


def test_fresh_state_all_pending():
    st = WorkflowState(run_id="r", mode="multi")
    assert all(st.status(s) == "pending" for s in STAGE_ORDER)
    assert st.total_errors() == 0
    assert st.next_pending() == STAGE_ORDER[0]


def test_stage_transitions_and_error_counts():
    st = WorkflowState(run_id="r", mode="multi")
    st.mark_in_progress("model_generation")
    assert st.status("model_generation") == "in_progress"
    st.record_error("model_generation")
    st.record_error("model_generation")
    assert st.error_count("model_generation") == 2
    st.mark_done("model_generation")
    assert st.is_done("model_generation")
    assert st.next_pending() == "training_execution"
    assert st.total_errors() == 2


def test_done_stage_cannot_regress():
    st = WorkflowState(run_id="r", mode="multi")
    st.mark_done("model_generation")
    with pytest.raises(ValueError):
        st.mark_in_progress("model_generation")
    with pytest.raises(ValueError):
        st.mark_failed("model_generation")
    st.mark_done("model_generation")       # idempotent


def test_done_requires_priors_done():
    st = WorkflowState(run_id="r", mode="react")
    with pytest.raises(ValueError):
        st.mark_done("training_execution")
    st.mark_done("model_generation")
    st.mark_done("training_execution")


def test_unknown_stage_rejected():
    st = WorkflowState(run_id="r", mode="multi")
    with pytest.raises(KeyError):
        st.status("nonsense")
    with pytest.raises(KeyError):
        st.record_error("nonsense")


def test_persist_load_round_trip(tmp_path):
    st = WorkflowState(run_id="round", mode="react")
    st.mark_done("model_generation")
    st.mark_in_progress("training_execution")
    st.record_error("training_execution")
    path = tmp_path / "state.json"
    persist_state(st, path)
    back = load_state(path)
    assert back.run_id == "round"
    assert back.mode == "react"
    assert back.is_done("model_generation")
    assert back.status("training_execution") == "in_progress"
    assert back.error_count("training_execution") == 1


def test_persist_leaves_no_temp_files(tmp_path):
    st = WorkflowState(run_id="r", mode="multi")
    path = tmp_path / "state.json"
    persist_state(st, path)
    persist_state(st, path)       # overwrite is atomic, not additive
    assert [p.name for p in tmp_path.iterdir()] == ["state.json"]


def test_load_rejects_bad_documents(tmp_path):
    path = tmp_path / "state.json"

    path.write_text("{broken")
    with pytest.raises(CorruptState):
        load_state(path)

    path.write_text(json.dumps({"version": 99}))
    with pytest.raises(VersionMismatch):
        load_state(path)

    st = WorkflowState(run_id="r", mode="multi")
    persist_state(st, path)
    doc = json.loads(path.read_text())
    doc["stages"]["model_generation"]["status"] = "exploded"
    path.write_text(json.dumps(doc))
    with pytest.raises(CorruptState):
        load_state(path)

    doc["stages"]["model_generation"]["status"] = "pending"
    doc["stages"]["model_generation"]["error_count"] = -1
    path.write_text(json.dumps(doc))
    with pytest.raises(CorruptState):
        load_state(path)


def test_load_rejects_done_after_pending(tmp_path):
    # a done stage with an unfinished predecessor cannot be a real run
    st = WorkflowState(run_id="r", mode="multi")
    path = tmp_path / "state.json"
    persist_state(st, path)
    doc = json.loads(path.read_text())
    doc["stages"]["training_execution"]["status"] = "done"
    path.write_text(json.dumps(doc))
    with pytest.raises(CorruptState):
        load_state(path)


def test_state_format_version_pinned():
    assert STATE_FORMAT_VERSION == 1

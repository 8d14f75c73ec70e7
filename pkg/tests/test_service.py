"""Alignment-service endpoint tests (in-process HTTP client)."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from lumenreg.cli import main as cli_main
from lumenreg.dataset_io import read_pose_matrices
from lumenreg.geometry import TransformParams, params_to_transform
from lumenreg.registration import load_session
from lumenreg.service import create_app


@pytest.fixture(scope="module")
def service_env(tmp_path_factory):
    base = tmp_path_factory.mktemp("svc")
    case_dir = base / "case"
    assert cli_main(["synth", "--out", str(case_dir), "--seed", "9",
                     "--trajectory", "moderate", "--frames", "30",
                     "--keyframes", "2", "--generations", "2"]) == 0
    session = load_session(case_dir / "session.json")
    out_path = base / "committed" / "t_initial.txt"
    app = create_app(session, out_path)
    return TestClient(app), session, out_path


class TestSessionEndpoint:
    def test_initial_state_zero_params(self, service_env):
        client, session, _ = service_env
        body = client.get("/api/session").json()
        assert body["keyframes"] == 2
        assert body["params"] == [0.0] * 6
        assert body["step"] == {"mm": 0.5, "rad": 0.005}
        assert 0.0 <= body["opacity"] <= 1.0

    def test_concurrent_reads_identical(self, service_env):
        client, _, _ = service_env
        a = client.get("/api/session").json()
        b = client.get("/api/session").json()
        assert a == b


class TestNudge:
    def test_zero_delta_no_change(self, service_env):
        client, _, _ = service_env
        before = client.get("/api/session").json()["params"]
        after = client.post("/api/nudge", json={"delta": [0.0] * 6}).json()
        assert after["params"] == before

    def test_nudges_compose_additively(self, service_env):
        client, _, _ = service_env
        start = client.get("/api/session").json()["params"]
        client.post("/api/nudge", json={"delta": [0, 0, 0, 0.5, 0, 0]})
        state = client.post("/api/nudge", json={"delta": [0, 0, 0, 0.5, 0, 0]}).json()
        assert state["params"][3] == pytest.approx(start[3] + 1.0)
        # undo for other tests
        client.post("/api/nudge", json={"delta": [0, 0, 0, -1.0, 0, 0]})

    def test_rejected_delta_preserves_state(self, service_env):
        client, _, _ = service_env
        before = client.get("/api/session").json()["params"]
        resp = client.post("/api/nudge", json={"delta": [1.0, 2.0]})
        assert resp.status_code == 400
        assert resp.json()["params"] == before


class TestRenderEndpoint:
    @pytest.mark.parametrize("mode", ["edge-overlay", "depth-overlay"])
    def test_returns_png(self, service_env, mode):
        client, _, _ = service_env
        resp = client.get(f"/api/render/0?mode={mode}")
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        assert resp.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_deterministic_for_fixed_state(self, service_env):
        client, _, _ = service_env
        a = client.get("/api/render/1?mode=edge-overlay").content
        b = client.get("/api/render/1?mode=edge-overlay").content
        assert a == b

    def test_invalid_index_is_error(self, service_env):
        client, _, _ = service_env
        assert client.get("/api/render/99").status_code == 404

    def test_invalid_mode_is_error(self, service_env):
        client, _, _ = service_env
        assert client.get("/api/render/0?mode=xray").status_code == 400

    def test_aligned_case_overlays_coincide(self, tmp_path):
        # zero perturbation on a session whose initial transform IS the truth
        case_dir = tmp_path / "aligned"
        assert cli_main(["synth", "--out", str(case_dir), "--seed", "12",
                         "--trajectory", "simple", "--frames", "24",
                         "--keyframes", "1", "--generations", "1"]) == 0
        import json as _json

        spec_path = case_dir / "session.json"
        spec = _json.loads(spec_path.read_text())
        spec["initial_transform"] = "t_gt.txt"
        spec_path.write_text(_json.dumps(spec))
        session = load_session(spec_path)
        client = TestClient(create_app(session, tmp_path / "t.txt"))
        import cv2

        png = client.get("/api/render/0?mode=edge-overlay").content
        img = cv2.imdecode(np.frombuffer(png, np.uint8), cv2.IMREAD_UNCHANGED)
        rendered = img[..., 2].astype(float) / 0.5 / 255.0  # red, at opacity 0.5
        target = img[..., 1].astype(float) / 255.0          # green
        # channels coincide up to 8-bit quantization and the opacity scale
        assert np.abs(rendered - target).max() <= 2.5 / 255.0 / 0.5

        # a 5 mm offset makes the channels visibly split
        client.post("/api/nudge", json={"delta": [0, 0, 0, 5.0, 0, 0]})
        png2 = client.get("/api/render/0?mode=edge-overlay").content
        img2 = cv2.imdecode(np.frombuffer(png2, np.uint8), cv2.IMREAD_UNCHANGED)
        diff = np.abs(img2[..., 2].astype(int) * 2 - img2[..., 1].astype(int))
        assert (diff > 64).sum() > 0


class TestOpacity:
    def test_set_and_clamp(self, service_env):
        client, _, _ = service_env
        assert client.post("/api/opacity", json={"value": 0.8}).json()["opacity"] == 0.8
        assert client.post("/api/opacity", json={"value": 1.5}).status_code == 400
        client.post("/api/opacity", json={"value": 0.5})


class TestCommit:
    def test_zero_perturbation_commits_the_guess(self, service_env):
        client, session, out_path = service_env
        state = client.get("/api/session").json()
        # drive params back to zero first
        client.post("/api/nudge", json={"delta": (-np.array(state["params"])).tolist()})
        body = client.post("/api/commit").json()
        assert body["path"] == str(out_path)
        np.testing.assert_allclose(np.array(body["matrix"]).reshape(4, 4),
                                   session.t_initial, atol=1e-12)
        reread = read_pose_matrices(out_path)[0]
        np.testing.assert_allclose(reread, session.t_initial, atol=1e-7)

    def test_commit_after_nudge_composes(self, service_env):
        client, session, out_path = service_env
        state = client.get("/api/session").json()
        client.post("/api/nudge", json={"delta": (-np.array(state["params"])).tolist()})
        client.post("/api/nudge", json={"delta": [0.01, 0, 0, 2.0, 0, 0]})
        body = client.post("/api/commit").json()
        expected = session.t_initial @ params_to_transform(
            TransformParams(0.01, 0, 0, 2.0, 0, 0))
        np.testing.assert_allclose(np.array(body["matrix"]).reshape(4, 4),
                                   expected, atol=1e-12)
        client.post("/api/nudge", json={"delta": [-0.01, 0, 0, -2.0, 0, 0]})

    def test_commit_idempotent_for_fixed_state(self, service_env):
        client, _, out_path = service_env
        a = client.post("/api/commit").json()
        content_a = out_path.read_bytes()
        b = client.post("/api/commit").json()
        assert a == b
        assert out_path.read_bytes() == content_a

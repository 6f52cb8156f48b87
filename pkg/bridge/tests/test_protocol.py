import json
import subprocess
import sys

import pytest


def spawn(*flags):
    return subprocess.Popen(
        [sys.executable, "-m", "tfm_bridge", *flags],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        text=True,
        bufsize=1,
    )


def send(proc, message):
    proc.stdin.write(json.dumps(message) + "\n")
    proc.stdin.flush()


def recv(proc):
    return json.loads(proc.stdout.readline())


def predict_request(request_id, context_y=(0, 0, 1), n_classes=2, n_rows=3, n_query=2):
    return {
        "type": "predict",
        "id": request_id,
        "context_x": [[float(i), 0.0] for i in range(n_rows)],
        "context_y": list(context_y)[:n_rows] + [0] * max(0, n_rows - len(context_y)),
        "query_x": [[0.5, 0.5]] * n_query,
        "n_classes": n_classes,
    }


@pytest.fixture
def mock_bridge():
    proc = spawn("--mock")
    send(proc, {"type": "hello", "protocol": 1})
    reply = recv(proc)
    assert reply == {"type": "hello", "protocol": 1, "name": "mock-majority"}
    yield proc
    if proc.poll() is None:
        send(proc, {"type": "bye"})
        proc.wait(timeout=10)


class TestHandshakeAndShutdown:
    def test_hello_echoes_protocol(self, mock_bridge):
        pass  # the fixture already asserts the handshake

    def test_bye_exits_zero(self):
        proc = spawn("--mock")
        send(proc, {"type": "hello", "protocol": 1})
        recv(proc)
        send(proc, {"type": "bye"})
        assert proc.wait(timeout=10) == 0

    def test_model_load_failure_exits_nonzero_before_handshake(self):
        proc = spawn("--model", "no_such_module:Nope")
        proc.stdin.close()
        assert proc.wait(timeout=10) != 0


class TestPredict:
    def test_majority_frequencies(self, mock_bridge):
        send(mock_bridge, predict_request(1, context_y=(0, 0, 1)))
        reply = recv(mock_bridge)
        assert reply["type"] == "proba"
        assert reply["id"] == 1
        for row in reply["proba"]:
            assert row == pytest.approx([2 / 3, 1 / 3])

    def test_rows_normalized_and_shaped(self, mock_bridge):
        send(mock_bridge, predict_request(2, n_classes=3, context_y=(0, 1, 2), n_query=1))
        reply = recv(mock_bridge)
        assert len(reply["proba"]) == 1
        assert len(reply["proba"][0]) == 3
        assert sum(reply["proba"][0]) == pytest.approx(1.0, abs=1e-6)

    def test_id_correlation_over_many_requests(self, mock_bridge):
        for i in range(100):
            send(mock_bridge, predict_request(1000 + i))
            reply = recv(mock_bridge)
            assert reply["id"] == 1000 + i
            assert reply["type"] == "proba"

    def test_deterministic_across_processes(self):
        replies = []
        for _ in range(2):
            proc = spawn("--mock")
            send(proc, {"type": "hello", "protocol": 1})
            recv(proc)
            send(proc, predict_request(5, context_y=(0, 1, 1)))
            replies.append(recv(proc))
            send(proc, {"type": "bye"})
            proc.wait(timeout=10)
        assert replies[0] == replies[1]


class TestErrors:
    def test_capacity_error_mentions_capacity(self):
        proc = spawn("--mock", "--max-context", "2")
        send(proc, {"type": "hello", "protocol": 1})
        recv(proc)
        send(proc, predict_request(7, n_rows=3))
        reply = recv(proc)
        assert reply["type"] == "error"
        assert reply["id"] == 7
        assert "capacity" in reply["message"]
        send(proc, {"type": "bye"})
        proc.wait(timeout=10)

    def test_malformed_json_answers_id_minus_one_and_continues(self, mock_bridge):
        mock_bridge.stdin.write("{nonsense\n")
        mock_bridge.stdin.flush()
        reply = recv(mock_bridge)
        assert reply == {"type": "error", "id": -1, "message": "malformed JSON"}
        send(mock_bridge, predict_request(8))
        assert recv(mock_bridge)["id"] == 8

    def test_unknown_type_reported(self, mock_bridge):
        send(mock_bridge, {"type": "train", "id": 4})
        reply = recv(mock_bridge)
        assert reply["type"] == "error"
        assert "unknown type" in reply["message"]

    def test_capacity_distinguishable_from_other_errors(self, mock_bridge):
        send(mock_bridge, {"type": "predict", "id": 9})  # missing fields
        reply = recv(mock_bridge)
        assert reply["type"] == "error"
        assert "capacity" not in reply["message"]


class TestQueryChunking:
    def test_large_query_set_chunked_internally(self):
        proc = spawn("--mock", "--batch-rows", "10")
        send(proc, {"type": "hello", "protocol": 1})
        recv(proc)
        send(proc, predict_request(3, n_query=35))
        reply = recv(proc)
        assert len(reply["proba"]) == 35
        send(proc, {"type": "bye"})
        proc.wait(timeout=10)

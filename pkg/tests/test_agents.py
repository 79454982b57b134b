from __future__ import annotations

import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planmix.agents import (
    GenerationRequest,
    RemoteAgentConfig,
    make_agent,
    remote_generate,
    stub_generate,
)
from planmix.audioio import AudioClip, encode_wav
from planmix.errors import AgentError
from planmix.utils import stable_hash

CAPTION_CORPUS = [f"sound of event number {i} happening" for i in range(100)]


class TestRequestValidation:
    def test_zero_duration(self):
        with pytest.raises(AgentError):
            stub_generate(GenerationRequest("x", 0.0))

    def test_over_limit_duration(self):
        with pytest.raises(AgentError):
            stub_generate(GenerationRequest("x", 31.0))

    def test_empty_description(self):
        with pytest.raises(AgentError):
            stub_generate(GenerationRequest("  ", 1.0))


class TestStub:
    def test_length_contract_2s(self):
        clip = stub_generate(GenerationRequest("rain", 2.0, seed=1, sample_rate=16000))
        assert clip.frames == 32000
        assert clip.channels == 1

    def test_length_contract_10s(self):
        clip = stub_generate(GenerationRequest("rain", 10.0, seed=1, sample_rate=16000))
        assert clip.frames == 160000

    def test_bit_identical_repeats(self):
        req = GenerationRequest("a dog barking twice", 1.5, seed=42)
        a = stub_generate(req)
        b = stub_generate(req)
        assert np.array_equal(a.samples, b.samples)

    def test_different_descriptions_change_frequency(self):
        # Hash-bucket oracle: dominant frequency is 200 + (hash mod 1800), so
        # two captions share a frequency only when their hashes agree mod
        # 1800 (chance 1/1800 per pair).
        buckets = [stable_hash(c) % 1800 for c in CAPTION_CORPUS]
        pairs = len(CAPTION_CORPUS) * (len(CAPTION_CORPUS) - 1) // 2
        colliding_pairs = sum(
            1
            for i in range(len(buckets))
            for j in range(i + 1, len(buckets))
            if buckets[i] == buckets[j]
        )
        assert colliding_pairs / pairs < 0.01

        # Non-colliding captions really do get distinct dominant tones.
        f0 = dominant_frequency(stub_generate(GenerationRequest(CAPTION_CORPUS[0], 1.0)))
        f1 = dominant_frequency(stub_generate(GenerationRequest(CAPTION_CORPUS[1], 1.0)))
        assert buckets[0] != buckets[1]
        assert abs(f0 - f1) > 1.0

    def test_frequency_matches_hash(self):
        caption = "thunder rolling in the distance"
        expected = 200.0 + stable_hash(caption) % 1800
        clip = stub_generate(GenerationRequest(caption, 2.0))
        assert abs(dominant_frequency(clip) - expected) < 1.0

    def test_peak_bounded_over_corpus(self):
        for caption in CAPTION_CORPUS:
            clip = stub_generate(GenerationRequest(caption, 0.5, seed=3))
            assert clip.peak() <= 0.35

    def test_fades_applied(self):
        clip = stub_generate(GenerationRequest("hiss", 1.0))
        assert abs(clip.samples[0, 0]) < 1e-12
        assert abs(clip.samples[0, -1]) < 1e-3

    @given(
        st.text(min_size=1, max_size=40).filter(lambda s: s.strip()),
        st.integers(0, 2**31),
        st.floats(0.05, 3.0),
    )
    @settings(max_examples=50, deadline=None)
    def test_referential_transparency(self, description, seed, duration):
        req = GenerationRequest(description, duration, seed=seed)
        assert np.array_equal(stub_generate(req).samples, stub_generate(req).samples)


def dominant_frequency(clip: AudioClip) -> float:
    spectrum = np.abs(np.fft.rfft(clip.samples[0]))
    freqs = np.fft.rfftfreq(clip.frames, 1 / clip.sample_rate)
    return float(freqs[int(np.argmax(spectrum))])


class _AgentHandler(BaseHTTPRequestHandler):
    response_builder = staticmethod(lambda: b"")

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        self.rfile.read(length)
        body = type(self).response_builder()
        self.send_response(200)
        self.send_header("Content-Type", "audio/wav")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def agent_server():
    server = HTTPServer(("127.0.0.1", 0), _AgentHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/generate"
    server.shutdown()


def one_second_wav(rate: int) -> bytes:
    t = np.arange(rate) / rate
    return encode_wav(AudioClip(0.25 * np.sin(2 * np.pi * 440 * t), rate))


class TestRemote:
    def test_pass_through(self, agent_server):
        _AgentHandler.response_builder = staticmethod(lambda: one_second_wav(16000))
        clip = remote_generate(
            GenerationRequest("bell", 1.0, sample_rate=16000),
            RemoteAgentConfig(endpoint=agent_server),
        )
        assert clip.frames == 16000
        assert clip.sample_rate == 16000

    def test_resamples_8k_to_16k(self, agent_server):
        _AgentHandler.response_builder = staticmethod(lambda: one_second_wav(8000))
        clip = remote_generate(
            GenerationRequest("bell", 1.0, sample_rate=16000),
            RemoteAgentConfig(endpoint=agent_server),
        )
        assert clip.sample_rate == 16000
        assert clip.frames == 16000
        # 440 Hz content survives the rate change
        assert abs(dominant_frequency(clip) - 440.0) < 2.0

    def test_truncated_body_is_agent_error(self, agent_server):
        _AgentHandler.response_builder = staticmethod(lambda: one_second_wav(16000)[:100])
        with pytest.raises(AgentError):
            remote_generate(
                GenerationRequest("bell", 1.0),
                RemoteAgentConfig(endpoint=agent_server, max_retries=0),
            )

    def test_wrong_duration_is_agent_error(self, agent_server):
        _AgentHandler.response_builder = staticmethod(lambda: one_second_wav(16000))
        with pytest.raises(AgentError):
            remote_generate(
                GenerationRequest("bell", 2.0, sample_rate=16000),
                RemoteAgentConfig(endpoint=agent_server, max_retries=0),
            )

    def test_unreachable_endpoint(self):
        config = RemoteAgentConfig(endpoint="http://127.0.0.1:1/generate",
                                   timeout=0.5, max_retries=0)
        with pytest.raises(AgentError):
            remote_generate(GenerationRequest("bell", 1.0), config)


class TestMakeAgent:
    def test_stub_selection(self):
        agent = make_agent("stub")
        assert agent is stub_generate

    def test_unknown_backend(self):
        with pytest.raises(AgentError):
            make_agent("quantum")

    def test_remote_requires_config(self):
        with pytest.raises(AgentError):
            make_agent("remote")

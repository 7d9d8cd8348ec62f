import json

import pytest

from seedsim.backend import Backend, BackendConfig, serve
from seedsim.flashlog import extract_log
from seedsim.kernel import Unit
from seedsim.mission import HttpBridge, RecordingBridge, run_mission
from seedsim.scenario import default_schema, load_scenario, nominal_scenario
from seedsim.sensors import MissionPhase


def small_nominal(seed=2029):
    # scaled-down apogee and sensor rate keep the unit suite quick; the full
    # profile runs in the acceptance suite
    return nominal_scenario(seed=seed, apogee_m=6000.0, sensor_rate_hz=50.0)


def test_same_seed_same_scenario_identical_traces(tmp_path):
    a = run_mission(small_nominal(), out_dir=tmp_path / "a")
    b = run_mission(small_nominal(), out_dir=tmp_path / "b")
    assert a.trace.digest() == b.trace.digest()
    # artifacts byte-identical too
    fa = (tmp_path / "a" / "flash_Seed1_a.bin").read_bytes()
    fb = (tmp_path / "b" / "flash_Seed1_a.bin").read_bytes()
    assert fa == fb


def test_different_seed_differs_only_in_noise_bearing_entries():
    def run(seed):
        sc = small_nominal(seed=seed)
        sc.iridium.loss_probability = 0.0  # keep the event population identical
        return run_mission(sc)

    a, b = run(1), run(2)
    assert a.trace.digest() != b.trace.digest()
    by_seq_a = {e.sequence: e for e in a.trace}
    by_seq_b = {e.sequence: e for e in b.trace}
    # a latency draw may push a delivery past the run horizon; any such
    # asymmetry must itself be an iridium event
    for seq in by_seq_a.keys() ^ by_seq_b.keys():
        entry = by_seq_a.get(seq) or by_seq_b.get(seq)
        assert entry.target == "iridium"
    for seq in by_seq_a.keys() & by_seq_b.keys():
        ea, eb = by_seq_a[seq], by_seq_b[seq]
        assert ea.target == eb.target
        if ea.target != "iridium":  # satellite latency draws are the only
            assert ea.label == eb.label      # noise-bearing trace fields
            assert ea.time_us == eb.time_us


def test_post_ejection_can_transmission_fails(tmp_path):
    art = run_mission(small_nominal(), out_dir=tmp_path)
    errors = art.trace.find(target="can.main", label_contains="bus-error")
    assert errors, "RBC polls after ejection must hit a bus error"
    eject_us = art.ejection_time_s * 1e6
    assert all(e.time_us > eject_us for e in errors)
    polls_failed = art.trace.find(target="rbc.can", label_contains="seed poll failed")
    assert polls_failed


def test_pre_ejection_frames_and_post_ejection_sbd(tmp_path):
    art = run_mission(small_nominal(), out_dir=tmp_path)
    bridge = art.bridge
    assert len(bridge.frames) > 0
    assert len(bridge.sbd_payloads) > 0
    # handover: at least one SBD payload byte-equal to a framed status payload
    from seedsim.protocols import decode_frame, decode_sbd
    from seedsim.mission import LINK_KEY
    framed_payloads = set()
    for wire in bridge.frames:
        frame = decode_frame(wire, key=LINK_KEY)
        if frame.msg_id == 16:
            framed_payloads.add(frame.payload)
    assert any(p in framed_payloads for p in bridge.sbd_payloads)


def test_mission_phases_and_landing(tmp_path):
    art = run_mission(small_nominal(), out_dir=tmp_path)
    recs, report = extract_log(art.seeds[Unit.Seed1].flash_a,
                               art.seeds[Unit.Seed1].flash_b)
    assert report.corrupt_skipped == []
    phases = {r.phase for r in recs}
    assert int(MissionPhase.Ascent) in phases
    assert int(MissionPhase.Descent) in phases
    assert int(MissionPhase.Landed) in phases
    # 250/sensor-rate cadence is exact
    deltas = {b.time_us - a.time_us for a, b in zip(recs, recs[1:])}
    assert len(deltas) == 1


def test_flat_spin_scenario_logs_high_g(tmp_path):
    sc = load_scenario({
        "base": "nominal", "seed": 404,
        "flight_profile": {"kind": "nominal", "launch_time_s": 10.0,
                           "apogee_m": 6000.0},
        "sensor_rate_hz": 50.0,
    })
    # inject 30 s into the descent
    t0 = sc.profile.apogee_time_s + 30.0
    sc.faults = [{"type": "flat_spin", "t0_s": t0, "duration_s": 20.0,
                  "magnitude_g": 115.0}]
    art = run_mission(sc, out_dir=tmp_path)
    recs, _ = extract_log(art.seeds[Unit.Seed1].flash_a)
    in_window = [r for r in recs if t0 <= r.time_us / 1e6 < t0 + 20.0]
    assert in_window
    high = [max(abs(v) for v in r.accel_high_g) for r in in_window]
    assert all(h >= 110.0 for h in high)  # truth 115 g, sensor sigma 0.5
    assert sum(high) / len(high) == pytest.approx(115.0, abs=0.5)
    precise = [max(abs(v) for v in r.accel_precise_g) for r in in_window]
    assert all(p <= 16.0 for p in precise)  # precise channel saturates
    outside = [r for r in recs if r.time_us / 1e6 > t0 + 25.0]
    assert any(max(abs(v) for v in r.accel_high_g) < 20.0 for r in outside)


def test_uart_cross_traffic_counted(tmp_path):
    art = run_mission(small_nominal(), out_dir=tmp_path)
    # the seed software objects are gone, but UART deliveries are in the trace
    deliveries = art.trace.find(target="uart.Seed1", label_contains="deliver")
    assert len(deliveries) > 10


def test_live_backend_end_to_end(tmp_path):
    config = BackendConfig(store_path=str(tmp_path / "ingest.ndjson"))
    backend = Backend(config, default_schema())
    with serve(backend, http_port=0, sbd_port=0) as handle:
        bridge = HttpBridge(f"http://127.0.0.1:{handle.http_port}",
                            "127.0.0.1", handle.sbd_port)
        sc = small_nominal()
        art = run_mission(sc, bridge=bridge, out_dir=tmp_path / "run")
        records = backend.store.all_records()
        channels = {r["channel"] for r in records}
        assert "rxsm" in channels and "iridium" in channels
        eject = art.ejection_time_s
        # pre-ejection rxsm telemetry and post-ejection satellite telemetry
        rxsm_status = [r for r in records
                       if r["channel"] == "rxsm" and r["message"] == "seed_status"]
        sbd_status = [r for r in records if r["channel"] == "iridium"
                      and r["message"] == "seed_status" and "error" not in r]
        assert rxsm_status and sbd_status
        # cross-channel pair: same origin + counter, field-wise equal JSON
        by_key = {}
        for r in rxsm_status:
            key = (r["origin"], r["fields"]["counter"]["value"])
            by_key[key] = r
        paired = [(by_key[(r["origin"], r["fields"]["counter"]["value"])], r)
                  for r in sbd_status
                  if (r["origin"], r["fields"]["counter"]["value"]) in by_key]
        assert paired, "handover status must arrive via both channels"
        for via_rxsm, via_sbd in paired:
            assert via_rxsm["fields"] == via_sbd["fields"]


def test_ping_round_trip_latency_recorded(tmp_path):
    config = BackendConfig(store_path=str(tmp_path / "ingest.ndjson"),
                           command_timeout_s=60.0)
    backend = Backend(config, default_schema())
    with serve(backend, http_port=0, sbd_port=0) as handle:
        bridge = HttpBridge(f"http://127.0.0.1:{handle.http_port}",
                            "127.0.0.1", handle.sbd_port)
        req = backend.dispatch_command("ping", "COP.Seed1")
        run_mission(small_nominal(), bridge=bridge, until_s=10.0)
        status = backend.command_status(req.command_id)
        assert status.ack_state() == "acked"
        assert "round_trip_s" in status.to_dict()


def test_radio_silence_command_through_the_stack(tmp_path):
    config = BackendConfig(store_path=str(tmp_path / "ingest.ndjson"))
    backend = Backend(config, default_schema())
    with serve(backend, http_port=0, sbd_port=0) as handle:
        bridge = HttpBridge(f"http://127.0.0.1:{handle.http_port}",
                            "127.0.0.1", handle.sbd_port)
        req = backend.dispatch_command("request-radio-silence", "COP.Seed1")
        sc = small_nominal()
        art = run_mission(sc, bridge=bridge, out_dir=tmp_path / "run", until_s=20.0)
        steps = art.trace.find(target="power.Seed1", label_contains="radio-silence step")
        assert len(steps) == 6
        for entry in steps[1:5]:
            assert "i_bat1=0.000" in entry.label and "i_bat2=0.000" in entry.label
        assert backend.command_status(req.command_id).ack_state() == "acked"

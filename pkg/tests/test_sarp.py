from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sarpsim.errors import ProxyError
from sarpsim.media import select_representation
from sarpsim.sarp import (
    RecoveryMode,
    RecoveryRequest,
    SarpProxy,
    SegmentCache,
    handle_recovery,
    record_metrics,
)
from sarpsim.unicast import Constant, RnisOracle, TokenBucket, Trace, UnicastChannel, rnis_query


def make_proxy(p, profile, mode):
    return SarpProxy(p, RnisOracle(profile), mode, UnicastChannel(TokenBucket(profile, 0.0)))


def req(i, t=0.0):
    return RecoveryRequest("ue-1", i, t, "6Mbps")


def test_sarp_off_serves_default(reference_presentation):
    res = make_proxy(reference_presentation, Constant(2e6), RecoveryMode.SARP_OFF).handle(req(120, 60.5))
    assert (res.rep_id, res.size_bytes) == ("6Mbps", 375_000)
    assert res.queried_bw_bps is None


def test_sarp_on_picks_alternative(reference_presentation):
    res = make_proxy(reference_presentation, Constant(4e6), RecoveryMode.SARP_ON).handle(req(120, 60.5))
    assert res.rep_id == "3Mbps" and res.size_bytes == 187_500
    assert res.end_s - res.start_s == pytest.approx(0.375)
    assert make_proxy(reference_presentation, Constant(10e6), "sarp-on").handle(req(5)).rep_id == "6Mbps"


@given(st.lists(st.floats(0, 100), min_size=1, max_size=20))
def test_sarp_on_equals_select_of_rnis(times):
    from sarpsim.media import PresentationConfig, build_presentation

    p = build_presentation(PresentationConfig(total_duration_s=10.0))
    prof = Trace(((0, 2e6), (20, 7e6), (50, 3.5e6), (70, 9e6)))
    proxy = make_proxy(p, prof, RecoveryMode.SARP_ON)
    for k, t in enumerate(sorted(times)):
        res = proxy.handle(req(k % p.segment_count, t))
        bw = rnis_query(proxy.rnis, "ue-1", t)
        assert res.rep_id == select_representation(p.representations, bw).id
        assert res.queried_bw_bps == bw


@given(st.floats(1e5, 2e7))
def test_sarp_off_independent_of_bandwidth(bw):
    from sarpsim.media import PresentationConfig, build_presentation

    p = build_presentation(PresentationConfig(total_duration_s=5.0))
    assert make_proxy(p, Constant(bw), RecoveryMode.SARP_OFF).handle(req(3)).rep_id == "6Mbps"


def test_metrics_and_conservation(reference_presentation):
    proxy = make_proxy(reference_presentation, Constant(3e6), RecoveryMode.SARP_OFF)
    assert record_metrics(proxy).as_dict() == {"recovery_count": 0, "recovery_bytes": 0, "served_reps": {}}
    for i in range(120):
        proxy.handle(req(i * 10, i * 5.0))
    m = record_metrics(proxy).as_dict()
    assert m["served_reps"] == {"6Mbps": 120}
    assert sum(m["served_reps"].values()) == m["recovery_count"] == 120
    assert m["recovery_bytes"] == 120 * 375_000


def test_sarp_on_bytes_not_above_sarp_off(reference_presentation):
    on = make_proxy(reference_presentation, Constant(4e6), RecoveryMode.SARP_ON)
    off = make_proxy(reference_presentation, Constant(4e6), RecoveryMode.SARP_OFF)
    for i in range(0, 1200, 37):
        on.handle(req(i, i * 0.5))
        off.handle(req(i, i * 0.5))
    assert on.metrics.recovery_bytes <= off.metrics.recovery_bytes


def test_cache_is_read_only(reference_presentation):
    cache = SegmentCache(reference_presentation)
    before = cache.snapshot()
    proxy = make_proxy(reference_presentation, Constant(4e6), RecoveryMode.SARP_ON)
    handle_recovery(req(7), reference_presentation, proxy.rnis, proxy.mode, proxy.channel, cache)
    assert cache.snapshot() == before and cache.hits == 1
    with pytest.raises(TypeError):
        cache._sizes[("6Mbps", 0)] = 1
    with pytest.raises(ProxyError):
        cache.get("9Mbps", 0)


def test_unknown_segment_rejected(reference_presentation):
    with pytest.raises(ProxyError):
        make_proxy(reference_presentation, Constant(4e6), RecoveryMode.SARP_ON).handle(req(1200))


def test_fifo_channel(reference_presentation):
    proxy = make_proxy(reference_presentation, Constant(3e6), RecoveryMode.SARP_OFF)
    a = proxy.handle(req(1, 1.0))
    b = proxy.handle(req(2, 1.1))
    assert a.end_s == pytest.approx(2.0) and b.start_s == a.end_s and b.end_s == pytest.approx(3.0)

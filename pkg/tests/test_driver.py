import pytest

from vitl.catalog import Credentials
from vitl.clock import VirtualClock
from vitl.driver import (
    DriverError,
    ProvisionPlan,
    SharedLink,
    SimDriverConfig,
    SimulatedDriver,
    Step,
    derive_ip,
    is_valid_ip,
    parse_subnet,
)
from helpers import make_image

CREDS = Credentials("labuser", "pw")


def make_plan(job_id=1, folder=None, node=1):
    return ProvisionPlan(
        job_id=job_id,
        unique_folder_id=folder or f"job-{job_id:06d}-try-01",
        image=make_image(),
        target_node=node,
        credentials=CREDS,
        required_mem=1024,
    )


def make_driver(load=0, **config):
    cfg = SimDriverConfig(**config)
    clock = VirtualClock()
    return SimulatedDriver(cfg, clock, host_load=lambda node: load), clock


# -- copy --------------------------------------------------------------------

def test_single_copy_duration_is_base_plus_transfer():
    # 500 MB over 100 Mbps: 500*8/100 = 40s on the wire, plus 5s setup
    driver, clock = make_driver(copy_base_seconds=5.0, clone_size_mb=500, share_bandwidth_mbps=100.0)
    outcome = driver.copy_clone(make_plan())
    assert outcome.success
    assert outcome.duration == pytest.approx(45.0)
    assert clock.now() == pytest.approx(45.0)


def test_scripted_copy_failure():
    driver, _ = make_driver(failure_script={(9, "COPY"): "fail"})
    outcome = driver.copy_clone(make_plan(job_id=9))
    assert not outcome.success
    assert outcome.step is Step.COPY


def test_folder_id_reuse_is_an_error():
    driver, _ = make_driver()
    driver.copy_clone(make_plan(folder="shared-folder"))
    with pytest.raises(DriverError):
        driver.copy_clone(make_plan(job_id=2, folder="shared-folder"))


def test_two_simultaneous_transfers_each_take_double():
    # equal-share link: both transfers see half the bandwidth for their
    # whole lifetime, so each wire time doubles
    driver, _ = make_driver(copy_base_seconds=5.0, clone_size_mb=500, share_bandwidth_mbps=100.0)
    a, b = make_plan(1), make_plan(2)
    driver.start_copy(a, now=0.0)
    driver.start_copy(b, now=0.0)
    first = driver.copy_completions()
    assert first[1] == pytest.approx(80.0)
    out_a = driver.finish_copy(a, now=80.0, started_at=0.0)
    out_b = driver.finish_copy(b, now=80.0, started_at=0.0)
    assert out_a.duration == pytest.approx(5.0 + 80.0)
    assert out_b.duration == pytest.approx(5.0 + 80.0)


def test_late_arrival_slows_remaining_transfer():
    driver, _ = make_driver(copy_base_seconds=0.0, clone_size_mb=500, share_bandwidth_mbps=100.0)
    a, b = make_plan(1), make_plan(2)
    driver.start_copy(a, now=0.0)      # alone: would finish at 40
    driver.start_copy(b, now=20.0)     # a has 250 MB left; both share from here
    key, when = driver.copy_completions()
    # a: 250 MB at 6.25 MB/s -> 40 more seconds
    assert key == a.unique_folder_id
    assert when == pytest.approx(60.0)
    driver.finish_copy(a, now=60.0, started_at=0.0)
    # b ran shared for 40s (250 MB), alone for the rest
    key, when = driver.copy_completions()
    assert key == b.unique_folder_id
    assert when == pytest.approx(80.0)


def test_link_rejects_time_going_backwards():
    link = SharedLink(100.0)
    link.start("a", 100, now=10.0)
    with pytest.raises(ValueError):
        link.advance(5.0)


# -- boot ---------------------------------------------------------------------

def copied_plan(driver, **kw):
    plan = make_plan(**kw)
    driver.copy_clone(plan)
    return plan


def booted_plan(driver, **kw):
    plan = copied_plan(driver, **kw)
    assert driver.boot(plan).success
    return plan


def test_boot_on_empty_host_costs_base():
    driver, _ = make_driver(load=0, boot_base_seconds=30.0, per_vm_slowdown=1.2)
    assert driver.boot(copied_plan(driver)).duration == pytest.approx(30.0)


def test_boot_slows_exponentially_with_neighbours():
    driver, _ = make_driver(load=3, boot_base_seconds=30.0, per_vm_slowdown=1.2)
    assert driver.boot(copied_plan(driver)).duration == pytest.approx(30.0 * 1.2 ** 3)
    assert driver.boot(copied_plan(driver, job_id=2)).duration == pytest.approx(51.84)


def test_scripted_boot_failure():
    driver, _ = make_driver(failure_script={(4, "BOOT"): "fail"})
    outcome = driver.boot(copied_plan(driver, job_id=4))
    assert not outcome.success


def test_fail_once_fires_a_single_time():
    driver, _ = make_driver(failure_script={(4, "BOOT"): "fail-once"})
    assert not driver.boot(copied_plan(driver, job_id=4)).success
    assert driver.boot(copied_plan(driver, job_id=4, folder="retry")).success


def test_steps_out_of_order_are_contract_violations():
    driver, _ = make_driver()
    with pytest.raises(AssertionError):
        driver.boot(make_plan())
    plan = copied_plan(driver, job_id=2)
    with pytest.raises(AssertionError):
        driver.query_ip(plan)


# -- ip query ------------------------------------------------------------------

def test_ip_is_deterministic_across_drivers():
    driver_a, _ = make_driver(seed=42)
    driver_b, _ = make_driver(seed=42)
    a = driver_a.query_ip(booted_plan(driver_a, job_id=5))
    b = driver_b.query_ip(booted_plan(driver_b, job_id=5))
    assert a.ip == b.ip
    assert is_valid_ip(a.ip, "10.20.0.0/16")


def test_distinct_jobs_get_distinct_ips():
    seen = {derive_ip(42, job, "10.20.0.0/16") for job in range(1, 10_001)}
    assert len(seen) == 10_000


def test_scripted_invalid_ip_fails_validation():
    driver, _ = make_driver(failure_script={(7, "QUERY_IP"): "invalid-ip"})
    outcome = driver.query_ip(booted_plan(driver, job_id=7))
    assert outcome.success and outcome.ip == "0.0.0.0"
    assert not is_valid_ip(outcome.ip, "10.20.0.0/16")


def test_ip_validator_shape_checks():
    assert not is_valid_ip("10.20.1", "10.20.0.0/16")
    assert not is_valid_ip("10.20.300.1", "10.20.0.0/16")
    assert not is_valid_ip("10.21.3.4", "10.20.0.0/16")
    assert not is_valid_ip("banana", "10.20.0.0/16")
    assert is_valid_ip("10.20.3.4", "10.20.0.0/16")


def test_subnet_parser_insists_on_16():
    assert parse_subnet("192.168.0.0/16") == (192, 168)
    with pytest.raises(ValueError):
        parse_subnet("10.0.0.0/8")


# -- teardown -------------------------------------------------------------------

def test_teardown_succeeds_and_is_idempotent():
    driver, _ = make_driver()
    plan = make_plan()
    driver.copy_clone(plan)
    first = driver.teardown(plan)
    second = driver.teardown(plan)
    assert first.success and second.success
    assert second.detail == "already torn down"


def test_teardown_after_failed_boot_is_cleanup():
    driver, _ = make_driver(failure_script={(3, "BOOT"): "fail"})
    plan = make_plan(job_id=3)
    driver.copy_clone(plan)
    assert not driver.boot(plan).success
    assert driver.teardown(plan).success


# -- determinism ------------------------------------------------------------------

def test_fixed_config_reproduces_outcomes_exactly():
    def run():
        driver, _ = make_driver(seed=11, failure_script={(2, "BOOT"): "fail-once"})
        results = []
        for job in (1, 2, 3):
            plan = make_plan(job_id=job)
            results.append(driver.copy_clone(plan))
            boot = driver.boot(plan)
            results.append(boot)
            if boot.success:
                results.append(driver.query_ip(plan))
            results.append(driver.teardown(plan))
        return results

    assert run() == run()


def test_config_validation():
    with pytest.raises(ValueError):
        SimDriverConfig(per_vm_slowdown=0.5)
    with pytest.raises(ValueError):
        SimDriverConfig(share_bandwidth_mbps=0)
    with pytest.raises(ValueError):
        SimDriverConfig(copy_base_seconds=-1)

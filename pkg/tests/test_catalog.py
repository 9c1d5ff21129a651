import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vitl.catalog import (
    CatalogError,
    Credentials,
    ImageCatalog,
    OsFamily,
    PreconfigChecklist,
    dump_seed_file,
    image_from_record,
    image_to_record,
    load_seed_file,
    validate_image,
)
from helpers import FULL_CHECKLIST, make_image


def test_fully_configured_image_is_servable():
    assert validate_image(make_image()) == []


def test_single_false_flag_is_single_violation():
    image = make_image(preconfig=PreconfigChecklist(False, True, True, True, True, True))
    assert validate_image(image) == ["autologin not set"]


def test_violation_count_matches_flag_and_structure_breaches():
    # oracle: one per false flag plus one per structural breach
    checklist = PreconfigChecklist(
        autologin_set=False,
        remote_server_installed=True,
        firewall_configured=False,
        guest_tools_installed=True,
        screensaver_off=True,
        auto_updates_off=True,
    )
    image = make_image(clone_vmx_path="", preconfig=checklist)
    expected = sum(
        1 for flag in (
            checklist.autologin_set,
            checklist.remote_server_installed,
            checklist.firewall_configured,
            checklist.guest_tools_installed,
            checklist.screensaver_off,
            checklist.auto_updates_off,
        ) if not flag
    ) + 1  # empty path
    violations = validate_image(image)
    assert len(violations) == expected == 3


def test_path_outside_share_prefix_is_flagged():
    image = make_image(clone_vmx_path="/home/someone/xp.vmx")
    assert any("shared-mount prefix" in v for v in validate_image(image))


@given(st.booleans(), st.booleans(), st.booleans(), st.booleans(), st.booleans(), st.booleans())
def test_validation_is_deterministic_and_pure(a, b, c, d, e, f):
    image = make_image(preconfig=PreconfigChecklist(a, b, c, d, e, f))
    first = validate_image(image)
    second = validate_image(image)
    assert first == second
    assert (first == []) == all((a, b, c, d, e, f))


def test_lookup_hits_and_misses():
    catalog = ImageCatalog()
    xp = make_image(vm_id=1, os_name="winxp-sp3", family=OsFamily.WIN)
    ubuntu = make_image(vm_id=2)
    catalog.add(xp)
    catalog.add(ubuntu)
    assert catalog.lookup(2) == ubuntu
    assert catalog.lookup(99) is None


def test_lookup_after_remove_is_absent():
    catalog = ImageCatalog()
    catalog.add(make_image(vm_id=3))
    catalog.remove(3)
    assert catalog.lookup(3) is None


def test_duplicate_vm_id_rejected():
    catalog = ImageCatalog()
    catalog.add(make_image(vm_id=7))
    with pytest.raises(CatalogError, match="duplicate"):
        catalog.add(make_image(vm_id=7, os_name="other"))


def test_unservable_image_refused_admission():
    catalog = ImageCatalog()
    with pytest.raises(CatalogError) as excinfo:
        catalog.add(make_image(preconfig=PreconfigChecklist()))
    assert len(excinfo.value.violations) == 6


def test_open_solaris_token_normalizes():
    assert OsFamily.parse("OPEN SOLARIS") is OsFamily.OPENSOLARIS
    assert OsFamily.parse("linux") is OsFamily.LINUX


def test_credentials_need_a_username():
    with pytest.raises(ValueError):
        Credentials("", "secret")


def test_seed_file_round_trip(tmp_path):
    path = tmp_path / "images.jsonl"
    images = [
        make_image(vm_id=1, os_name="winxp-sp3", family=OsFamily.WIN),
        make_image(vm_id=2),
        make_image(vm_id=5, os_name="osol-2009", family=OsFamily.OPENSOLARIS),
    ]
    catalog = ImageCatalog()
    for image in images:
        catalog.add(image)
    dump_seed_file(catalog, path)
    loaded = load_seed_file(path)
    assert [im for im in loaded] == images


def test_seed_record_field_names_are_stable():
    record = image_to_record(make_image(vm_id=4))
    assert list(record)[:5] == ["vm_id", "os_name", "clone_vmx_path", "os_family", "display_name"]
    assert image_from_record(json.loads(json.dumps(record))) == make_image(vm_id=4)


def test_seed_file_error_names_line(tmp_path):
    path = tmp_path / "images.jsonl"
    good = json.dumps(image_to_record(make_image(vm_id=1)))
    path.write_text(good + "\n{ not json\n")
    with pytest.raises(CatalogError, match=r":2:"):
        load_seed_file(path)


def test_checklist_all_set_helper():
    assert FULL_CHECKLIST.all_set()
    assert not PreconfigChecklist().all_set()

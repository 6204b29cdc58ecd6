#!/usr/bin/env python3
"""Regenerate the prompt golden fixtures under tests/fixtures/prompts/.

Run only after an intentional change to the prompt serialization format,
then review the diff by hand; the golden suite exists to catch unintended
byte-level drift.
"""

import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from formfill.context_store import ContextStore
from formfill.form_model import apply_update, sync_structure
from formfill.prompt_builder import build_prompt
from formfill.cli import render_prompt_text

OUT = os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures", "prompts")


def case_empty_bag_simple_form():
    store = ContextStore()
    snapshot = sync_structure(
        None, "https://forms.example", [("phone", "Phone", ""), ("city", "City", "")]
    )
    return store, snapshot, False


def case_selection_search_manual():
    store = ContextStore()
    page = (
        "Welcome to Lincoln High School. " * 30
        + "Main office: (541) 555-0172."
        + " Office hours are 8am to 4pm on weekdays. " * 20
    )
    start = page.index("(541)")
    store.add_selection("Lincoln High School - Contact Us", page, start, start + 14)
    store.add_search("lincoln high school principal")
    store.add_manual("District: Jefferson Unified")
    snapshot = sync_structure(
        None,
        "https://crm.example",
        [
            ("school", "School Name", ""),
            ("principal", "Principal", ""),
            ("phone", "Phone Number", ""),
        ],
    )
    return store, snapshot, False


def _edited_inputs():
    store = ContextStore()
    store.add_manual("they prefer the long country form")
    snapshot = sync_structure(
        None,
        "https://crm.example",
        [("city", "City", ""), ("state", "State", "CA"), ("country", "Country", "")],
    )
    apply_update(snapshot, "city", "Berk")
    apply_update(snapshot, "city", "Berkeley")  # coalesces
    apply_update(snapshot, "country", "United States")
    apply_update(snapshot, "city", "Berkeley, CA")
    return store, snapshot


def case_edited_fields():
    store, snapshot = _edited_inputs()
    return store, snapshot, False


def case_edited_fields_suppressed():
    store, snapshot = _edited_inputs()
    return store, snapshot, True


def case_one_example_exchange():
    store = ContextStore()
    fields = [("name", "Full Name", ""), ("shirt", "T-shirt size", "med")]
    first = sync_structure(None, "https://hr.example", fields)
    store.add_manual("roster row: Keiko Tanaka, medium")
    store.save_example(first, {"name": "Keiko Tanaka", "shirt": "M"})
    store.add_manual("roster row: Samir Rahman, extra large")
    snapshot = sync_structure(None, "https://hr.example", [
        ("name", "Full Name", ""),
        ("shirt", "T-shirt size", "extra large"),
    ])
    return store, snapshot, False


def case_key_collisions_two_examples():
    store = ContextStore()
    fields = [("a", "Name", ""), ("b", "Name", ""), ("c", "Name", "")]
    for payload in ("alpha beta", "gamma delta"):
        snap = sync_structure(None, "https://dup.example", fields)
        store.add_manual(payload)
        store.save_example(snap, {"a": payload.split()[0], "b": "", "c": ""})
    snapshot = sync_structure(None, "https://dup.example", fields)
    return store, snapshot, False


def case_pruned_examples():
    store = ContextStore()
    fields = [("f", "Field", "")]
    for i in range(8):
        snap = sync_structure(None, "https://big.example", fields)
        store.add_manual(f"bulk example {i}: " + ("data " * 2400))
        store.save_example(snap, {"f": f"value {i}"})
    store.add_search("the current query")
    snapshot = sync_structure(None, "https://big.example", fields)
    return store, snapshot, False


def case_unicode_content():
    store = ContextStore()
    store.add_manual("住所: 〒150-0041 東京都渋谷区神南1-2-3")
    store.add_search("métro café près d'ici")
    snapshot = sync_structure(
        None,
        "https://intl.example",
        [("addr", "Adresse", "Ελλάδα"), ("note", "Note", "")],
    )
    apply_update(snapshot, "note", "naïve… na\u00efve")
    return store, snapshot, False


CASES = {
    "empty_bag_simple_form": case_empty_bag_simple_form,
    "selection_search_manual": case_selection_search_manual,
    "edited_fields": case_edited_fields,
    "edited_fields_suppressed": case_edited_fields_suppressed,
    "one_example_exchange": case_one_example_exchange,
    "key_collisions_two_examples": case_key_collisions_two_examples,
    "pruned_examples": case_pruned_examples,
    "unicode_content": case_unicode_content,
}


def main():
    for name, build in CASES.items():
        store, snapshot, suppress = build()
        case_dir = os.path.join(OUT, name)
        os.makedirs(case_dir, exist_ok=True)
        with open(os.path.join(case_dir, "bag.json"), "w", encoding="utf-8") as f:
            json.dump(store.bag.to_dict(), f, indent=1, ensure_ascii=False)
            f.write("\n")
        with open(os.path.join(case_dir, "snapshot.json"), "w", encoding="utf-8") as f:
            json.dump(snapshot.to_dict(), f, indent=1, ensure_ascii=False)
            f.write("\n")
        with open(os.path.join(case_dir, "flags.json"), "w", encoding="utf-8") as f:
            json.dump({"suppress_edits": suppress}, f)
            f.write("\n")
        prompt = build_prompt(store.bag, snapshot, suppress_edits=suppress)
        with open(os.path.join(case_dir, "golden.txt"), "w", encoding="utf-8") as f:
            f.write(render_prompt_text(prompt))
        print(f"{name}: {len(prompt.messages)} messages, {prompt.token_count} tokens, "
              f"model {prompt.model.name}")


if __name__ == "__main__":
    main()

"""Chat-completion clients used by the judge and question generation.

One wire client speaks an OpenAI-compatible chat API; the others are
deterministic stand-ins so every pipeline stage runs offline.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Mapping, Sequence

import requests

from .errors import ClientError
from .jsonio import read_jsonl

JUDGE_API_KEY_ENV = "JUDGE_API_KEY"


class ChatClient:
    """complete() returns the assistant reply text for a message list.

    ``item_id`` is advisory context that scripted clients key on; wire
    clients ignore it.
    """

    def complete(
        self,
        messages: list[dict],
        *,
        model: str | None = None,
        temperature: float = 0.0,
        item_id: str | None = None,
    ) -> str:
        raise NotImplementedError


class OpenAICompatClient(ChatClient):
    """Minimal chat-completions client; API key from JUDGE_API_KEY."""

    def __init__(
        self,
        endpoint: str = "https://api.openai.com/v1/chat/completions",
        *,
        default_model: str = "gpt-3.5-turbo",
        timeout_s: float = 60.0,
        session: requests.Session | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.default_model = default_model
        self.timeout_s = timeout_s
        self._session = session

    def complete(self, messages, *, model=None, temperature=0.0, item_id=None) -> str:
        payload = {
            "model": model or self.default_model,
            "messages": messages,
            "temperature": temperature,
        }
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(JUDGE_API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        poster = self._session if self._session is not None else requests
        try:
            response = poster.post(
                self.endpoint, json=payload, headers=headers, timeout=self.timeout_s
            )
        except requests.RequestException as exc:
            raise ClientError(f"cannot reach {self.endpoint}: {exc}") from exc
        if response.status_code != 200:
            raise ClientError(f"chat endpoint returned status {response.status_code}")
        try:
            body = response.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ClientError(f"malformed chat completion body: {exc}") from exc
        if not isinstance(text, str):
            raise ClientError("chat completion content is not a string")
        return text


class ScriptedJudge(ChatClient):
    """Replays judge verdict text keyed by item id, for offline runs."""

    def __init__(self, replies: Mapping[str, str]) -> None:
        self.replies = dict(replies)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedJudge":
        replies = {}
        for row in read_jsonl(path):
            if "item_id" in row and "reply" in row:
                replies[str(row["item_id"])] = str(row["reply"])
        return cls(replies)

    def complete(self, messages, *, model=None, temperature=0.0, item_id=None) -> str:
        if item_id is None or item_id not in self.replies:
            raise ClientError(f"no scripted judge reply for item {item_id!r}")
        return self.replies[item_id]


_DEFAULT_QA_BANK: tuple[tuple[str, str], ...] = (
    (
        "How do I keep fresh herbs from wilting before I get to use them?",
        "Trim the stems, stand the bunch in a glass with an inch of water, and cover "
        "the leaves loosely with a plastic bag in the refrigerator. Basil is the "
        "exception: keep it at room temperature, away from cold drafts, and change "
        "the water every two days.",
    ),
    (
        "What is the difference between baking soda and baking powder?",
        "Baking soda is pure sodium bicarbonate and needs an acid in the batter, "
        "such as buttermilk or lemon juice, to release gas. Baking powder already "
        "contains its own acid and only needs moisture and heat, so it works in "
        "batters with no acidic ingredient. Use about 1 teaspoon of baking powder "
        "or 1/4 teaspoon of baking soda per cup of flour.",
    ),
    (
        "How can I tell when a pan is hot enough for searing?",
        "Heat the dry pan over medium-high for two to three minutes, then flick a "
        "few drops of water onto it. If the drops bead up and skate around before "
        "evaporating, the pan is ready; if they sizzle away instantly, wait a "
        "little longer. Add oil only after this test so it does not scorch.",
    ),
    (
        "Why should meat rest after cooking and for how long?",
        "Resting lets the juices thicken and redistribute so they stay in the meat "
        "when you slice it. Rest small cuts like steaks and chops for 5 to 10 "
        "minutes under loose foil, and large roasts for 15 to 30 minutes. The "
        "internal temperature also rises a few degrees during the rest.",
    ),
    (
        "What is the proper way to measure flour without a scale?",
        "Fluff the flour in its container, spoon it into the measuring cup until "
        "it mounds over the rim, then level it off with a straight edge. Scooping "
        "the cup directly into the bag compacts the flour and can add 20 to 30 "
        "grams per cup, which dries out baked goods.",
    ),
    (
        "How do I keep pasta from sticking together while it cooks?",
        "Use plenty of water, at least 4 quarts per pound, salt it generously, and "
        "stir during the first two minutes while the surface starch is released. "
        "Keep the water at a strong boil and skip the oil; it only coats the pasta "
        "and keeps sauce from clinging later.",
    ),
    (
        "What does it mean to deglaze a pan and why bother?",
        "After searing, pour a splash of liquid such as wine, stock, or even water "
        "into the hot pan and scrape up the browned bits stuck to the bottom. "
        "Those bits are concentrated flavor, and the resulting liquid becomes the "
        "base of a quick pan sauce.",
    ),
    (
        "How should I season a cast iron skillet?",
        "Wash and dry it completely, rub the entire surface with a very thin layer "
        "of neutral oil, wipe off the excess, and bake it upside down at 450F for "
        "an hour. Repeat two or three times for a new pan, and afterward maintain "
        "it by drying promptly and wiping with a drop of oil after each use.",
    ),
    (
        "What is the safest way to thaw frozen meat?",
        "Thaw it in the refrigerator on a tray, allowing roughly 24 hours per 5 "
        "pounds. If you are short on time, submerge the sealed package in cold "
        "water and change the water every 30 minutes. Never thaw meat on the "
        "counter, because the surface spends too long in the unsafe temperature "
        "zone.",
    ),
    (
        "How do I balance a dish that tastes too salty?",
        "Dilute it first: add unsalted stock, water, or more of the main "
        "ingredients. Then round the edges with an acid like lemon juice or "
        "vinegar and a touch of sweetness. For soups and stews, a handful of raw "
        "rice or potato simmered in the pot absorbs some salty liquid too.",
    ),
    (
        "When should I use high heat versus low heat on the stove?",
        "High heat is for driving off water and building color fast: searing, "
        "stir-frying, boiling. Low heat is for coaxing texture without scorching: "
        "melting onions, holding a braise at a bare simmer, cooking eggs gently. "
        "Most mistakes come from using high heat for jobs that need patience.",
    ),
    (
        "What is mise en place and why do cooks insist on it?",
        "It means having everything in its place before the heat goes on: "
        "ingredients measured, vegetables cut, pans and tools out. Once cooking "
        "starts, many steps take under a minute, and stopping to chop or measure "
        "mid-recipe is how things burn or get forgotten.",
    ),
)


class MockQAClient(ChatClient):
    """Cycles a deterministic bank of general cooking QA pairs.

    The bank order is shuffled by seed; replies wrap around when called
    more times than the bank size, which exercises dedup and exhaustion
    paths without a network.
    """

    def __init__(
        self,
        bank: Sequence[tuple[str, str]] | None = None,
        seed: int = 0,
    ) -> None:
        import random

        entries = list(bank if bank is not None else _DEFAULT_QA_BANK)
        random.Random(seed).shuffle(entries)
        self.bank = entries
        self.calls = 0

    def complete(self, messages, *, model=None, temperature=0.0, item_id=None) -> str:
        question, answer = self.bank[self.calls % len(self.bank)]
        self.calls += 1
        return json.dumps({"question": question, "answer": answer})

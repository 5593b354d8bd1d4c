"""Synthetic persona-dialogue corpus, PersonaChat-format I/O, and the
keyword-based persona-consistency proxy metric.

Personas are built from a fixed attribute schema (hobby, food, job, pet,
place); every attribute value is a single token that appears verbatim in
one of the persona statements and in the agent turns that reveal it. That
makes keyword matching a sound consistency check on this corpus.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ATTRIBUTE_SCHEMA = {
    "hobby": ["fishing", "painting", "hiking", "chess", "dancing",
              "gardening", "skiing", "photography", "knitting", "surfing"],
    "food": ["pizza", "sushi", "tacos", "pasta", "curry",
             "pancakes", "salad", "burgers", "ramen", "dumplings"],
    "job": ["teacher", "doctor", "farmer", "artist", "engineer",
            "chef", "pilot", "writer", "nurse", "carpenter"],
    "pet": ["dog", "cat", "parrot", "rabbit", "hamster",
            "turtle", "goldfish", "pony", "lizard", "ferret"],
    "place": ["seattle", "tokyo", "paris", "denver", "austin",
              "boston", "dublin", "oslo", "cairo", "lisbon"],
}

_STATEMENTS = {
    "hobby": ["i love {v} .", "my favorite hobby is {v} .", "i spend my weekends on {v} ."],
    "food": ["my favorite food is {v} .", "i could eat {v} every day ."],
    "job": ["i work as a {v} .", "i am a {v} ."],
    "pet": ["i have a pet {v} .", "my {v} is my best friend ."],
    "place": ["i live in {v} .", "my home is in {v} ."],
}

_QUESTIONS = {
    "hobby": ["what do you do for fun ?", "do you have any hobbies ?"],
    "food": ["what is your favorite food ?", "what do you like to eat ?"],
    "job": ["what do you do for work ?", "what is your job ?"],
    "pet": ["do you have any pets ?", "any animals at home ?"],
    "place": ["where do you live ?", "where are you from ?"],
}

_REVEALS = {
    "hobby": ["i love {v} .", "i really enjoy {v} .", "{v} is my favorite thing to do .",
              "i spend a lot of time on {v} ."],
    "food": ["i love {v} .", "my favorite food is {v} .", "i could eat {v} all day ."],
    "job": ["i am a {v} .", "i work as a {v} .", "being a {v} keeps me busy ."],
    "pet": ["i have a {v} .", "my {v} keeps me company .", "i love my {v} ."],
    "place": ["i live in {v} .", "home for me is {v} .", "{v} is where i live ."],
}

# two-clause replies used as gold responses; the keyword appears in both
# clauses so models must sustain it across the sentence
_GOLD_SAME = {
    "hobby": ["i love {v} . {v} is so much fun .", "i really enjoy {v} . {v} makes me happy ."],
    "food": ["i love {v} . {v} is the best food ever .", "my favorite food is {v} . i eat {v} all the time ."],
    "job": ["i am a {v} . being a {v} is great .", "i work as a {v} . my {v} work keeps me busy ."],
    "pet": ["i have a {v} . my {v} is adorable .", "i love my {v} . the {v} keeps me company ."],
    "place": ["i live in {v} . {v} is a lovely place .", "home for me is {v} . i really like {v} ."],
}

_FOLLOWUPS = ["that sounds great ! tell me more about your {a} .",
              "nice ! i want to hear more about your {a} ."]

_GREET_USER = ["hello !", "hi there !", "hey , how are you ?"]
_GREET_AGENT = ["hi ! nice to meet you .", "hello ! i am doing well .", "hey ! good to see you ."]
_CHIT_USER = ["the weather is so nice today .", "it has been a long day ."]
_CHIT_AGENT = ["yes it is a lovely day .", "i hope you get some rest soon .",
               "it sure is a beautiful day ."]


@dataclass(frozen=True)
class Persona:
    id: int
    statements: tuple
    attributes: dict


@dataclass(frozen=True)
class Turn:
    speaker: str  # "user" or "agent"
    text: str


@dataclass(frozen=True)
class Dialogue:
    persona: Persona
    turns: tuple


@dataclass(frozen=True)
class DialogueExample:
    persona: Persona
    context: tuple  # Turns before the response
    response: str


@dataclass
class Corpus:
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)
    seed: int = 0

    def train_examples(self):
        return [ex for d in self.train for ex in examples_from_dialogue(d)]

    def test_examples(self):
        return [ex for d in self.test for ex in examples_from_dialogue(d)]


def examples_from_dialogue(dialogue: Dialogue):
    """One DialogueExample per agent turn, context = everything before it."""
    out = []
    for i, turn in enumerate(dialogue.turns):
        if turn.speaker == "agent" and i > 0:
            out.append(DialogueExample(
                persona=dialogue.persona,
                context=tuple(dialogue.turns[:i]),
                response=turn.text,
            ))
    return out


def _make_persona(pid: int, rng: np.random.Generator) -> Persona:
    attrs = {}
    statements = []
    for attr, values in ATTRIBUTE_SCHEMA.items():
        v = values[rng.integers(len(values))]
        attrs[attr] = v
        tmpl = _STATEMENTS[attr][rng.integers(len(_STATEMENTS[attr]))]
        statements.append(tmpl.format(v=v))
    return Persona(id=pid, statements=tuple(statements), attributes=attrs)


def _pick(rng, options):
    return options[rng.integers(len(options))]


def _make_dialogue(persona: Persona, rng: np.random.Generator) -> Dialogue:
    attrs = list(ATTRIBUTE_SCHEMA)
    a1 = attrs[rng.integers(len(attrs))]
    v1 = persona.attributes[a1]
    turns = [
        Turn("user", _pick(rng, _GREET_USER)),
        Turn("agent", _pick(rng, _GREET_AGENT)),
        Turn("user", _pick(rng, _QUESTIONS[a1])),
        Turn("agent", _pick(rng, _REVEALS[a1]).format(v=v1)),
    ]
    kind = rng.random()
    if kind < 0.5:
        # follow-up probe on the already-revealed attribute
        turns.append(Turn("user", _pick(rng, _FOLLOWUPS).format(a=a1)))
        turns.append(Turn("agent", _pick(rng, _GOLD_SAME[a1]).format(v=v1)))
    elif kind < 0.8:
        # probe a second, fresh attribute
        a2 = _pick(rng, [a for a in attrs if a != a1])
        turns.append(Turn("user", _pick(rng, _QUESTIONS[a2])))
        turns.append(Turn("agent", _pick(rng, _GOLD_SAME[a2]).format(v=persona.attributes[a2])))
    else:
        turns.append(Turn("user", _pick(rng, _CHIT_USER)))
        turns.append(Turn("agent", _pick(rng, _CHIT_AGENT)))
    return Dialogue(persona=persona, turns=tuple(turns))


def generate_corpus(n_personas: int = 20, n_dialogues: int = 2000, seed: int = 0) -> Corpus:
    """Deterministic synthetic corpus with a persona-disjoint 90/10 split."""
    if n_personas < 2:
        raise ValueError("generate_corpus: need at least 2 personas")
    rng = np.random.default_rng(seed)
    personas = [_make_persona(i, rng) for i in range(n_personas)]
    n_test_personas = max(1, round(0.1 * n_personas))
    test_personas = personas[-n_test_personas:]
    train_personas = personas[:-n_test_personas]

    n_test = max(1, round(0.1 * n_dialogues))
    n_train = n_dialogues - n_test
    corpus = Corpus(seed=seed)
    for _ in range(n_train):
        corpus.train.append(_make_dialogue(_pick(rng, train_personas), rng))
    for _ in range(n_test):
        corpus.test.append(_make_dialogue(_pick(rng, test_personas), rng))
    return corpus


# -- PersonaChat-format I/O ----------------------------------------------


def dialogues_to_personachat(dialogues) -> str:
    """Render dialogues in the numbered-line PersonaChat text format."""
    lines = []
    for d in dialogues:
        n = 1
        for s in d.persona.statements:
            lines.append(f"{n} your persona: {s}")
            n += 1
        turns = list(d.turns)
        for i in range(0, len(turns) - 1, 2):
            lines.append(f"{n} {turns[i].text}\t{turns[i + 1].text}")
            n += 1
    return "\n".join(lines) + "\n"


class PersonaChatParseError(ValueError):
    pass


def load_personachat(path):
    """Parse a PersonaChat-format file into DialogueExamples.

    Yields one example per agent turn; persona statements accumulate per
    dialogue and line numbers reset to 1 at each new dialogue.
    """
    with open(path, encoding="utf-8") as f:
        text = f.read()
    examples = []
    statements = []
    turns = []
    prev_n = 0
    next_pid = 0

    def flush():
        nonlocal statements, turns, next_pid
        statements, turns = [], []
        next_pid += 1

    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        head, _, rest = raw.partition(" ")
        try:
            n = int(head)
        except ValueError:
            raise PersonaChatParseError(f"line {lineno}: missing line number")
        if n <= prev_n:
            flush()
        prev_n = n
        if rest.startswith("your persona: "):
            if turns:
                raise PersonaChatParseError(
                    f"line {lineno}: persona statement after dialogue turns"
                )
            statements.append(rest[len("your persona: "):])
        else:
            if "\t" not in rest:
                raise PersonaChatParseError(f"line {lineno}: exchange line missing tab")
            user_utt, agent_utt = rest.split("\t", 1)
            persona = Persona(id=next_pid, statements=tuple(statements),
                              attributes=_infer_attributes(statements))
            turns.append(Turn("user", user_utt))
            examples.append(DialogueExample(
                persona=persona, context=tuple(turns), response=agent_utt))
            turns.append(Turn("agent", agent_utt))
    return examples


def _infer_attributes(statements):
    """Recover the attribute map when statements use the known schema values."""
    attrs = {}
    joined = " ".join(statements)
    tokens = set(joined.split())
    for attr, values in ATTRIBUTE_SCHEMA.items():
        for v in values:
            if v in tokens:
                attrs[attr] = v
                break
    return attrs


def write_corpus(corpus: Corpus, train_path, test_path, manifest_path=None):
    with open(train_path, "w", encoding="utf-8") as f:
        f.write(dialogues_to_personachat(corpus.train))
    with open(test_path, "w", encoding="utf-8") as f:
        f.write(dialogues_to_personachat(corpus.test))
    if manifest_path:
        manifest = {
            "seed": corpus.seed,
            "n_train_dialogues": len(corpus.train),
            "n_test_dialogues": len(corpus.test),
        }
        with open(manifest_path, "w", encoding="utf-8") as f:
            json.dump(manifest, f, sort_keys=True, indent=2)
            f.write("\n")


# -- consistency proxy ----------------------------------------------------


def persona_consistency_proxy(response_text: str, persona: Persona, all_personas=None) -> int:
    """+1 if the response names one of the persona's own attribute values,
    -1 if it names a conflicting value for the same attribute, else 0.

    Conflicting values are drawn from ``all_personas`` when given,
    otherwise from the whole attribute schema.
    """
    tokens = set(response_text.lower().split())
    own = set(persona.attributes.values())
    if tokens & own:
        return 1
    if all_personas is not None:
        conflict = {}
        for p in all_personas:
            for attr, v in p.attributes.items():
                conflict.setdefault(attr, set()).add(v)
    else:
        conflict = {attr: set(vals) for attr, vals in ATTRIBUTE_SCHEMA.items()}
    for attr, values in conflict.items():
        mine = persona.attributes.get(attr)
        if any(v != mine and v in tokens for v in values):
            return -1
    return 0

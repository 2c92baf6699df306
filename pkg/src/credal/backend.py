"""Next-token probability sources and prompt construction.

A backend exposes two capabilities: the next-token distribution after a
prompt plus a token prefix, and its own tokenization of a surface string.
Real serving APIs itemize only the top-k tokens, so every distribution
carries a residual for the mass that was not itemized; probabilities that
had to fall back on the residual are flagged approximate rather than
silently absorbed.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import threading
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Protocol

import httpx

from .errors import CredalError
from .logic import And, Atom, AtomRegistry, Formula, Implies, Not, Or

EPS_NORM = 1e-6

TEMPLATE_DEFAULT = "is-it-the-case/v1"
TEMPLATE_BINARY = "is-it-the-case-binary/v1"
_BINARY_SUFFIX = " Answer yes or no."


class BackendError(CredalError):
    """Failure while querying a probability source."""

    def __init__(self, message: str, prompt: Optional["Prompt"] = None):
        super().__init__(message)
        self.prompt = prompt


class NormalizationError(BackendError):
    """A distribution's itemized mass plus residual strays from 1."""


class UnscriptedContextError(BackendError):
    """A strict mock backend was asked about a context it has no script for."""


class BackendTimeoutError(BackendError):
    """An HTTP backend did not answer within the configured timeout."""


class UnrenderableFormulaError(CredalError):
    """A formula mentions an atom the registry does not know."""


@dataclass(frozen=True)
class Prompt:
    text: str
    template_id: str

    def __post_init__(self):
        if not self.text:
            raise CredalError("prompt text must be non-empty")


@dataclass(frozen=True)
class TokenDistribution:
    """Itemized head of a next-token distribution plus unitemized residual."""

    entries: dict[str, float]
    residual: float = 0.0

    def __post_init__(self):
        for token, prob in self.entries.items():
            if prob < 0.0:
                raise NormalizationError(f"negative probability for token {token!r}")
        if self.residual < 0.0:
            raise NormalizationError("negative residual")
        total = math.fsum(self.entries.values()) + self.residual
        if not (1.0 - EPS_NORM <= total <= 1.0 + EPS_NORM):
            raise NormalizationError(
                f"itemized mass plus residual is {total!r}, expected 1 within {EPS_NORM}"
            )

    def probability(self, token: str) -> tuple[float, bool]:
        """(probability, itemized).  Non-itemized tokens get the residual bound."""
        if token in self.entries:
            return self.entries[token], True
        return self.residual, False

    def head(self, limit: int = 16) -> list[tuple[str, float]]:
        ordered = sorted(self.entries.items(), key=lambda kv: (-kv[1], kv[0]))
        return ordered[:limit]


@dataclass(frozen=True)
class BackendConfig:
    kind: str  # "mock" | "http"
    endpoint: Optional[str] = None
    top_k: int = 16
    timeout_s: float = 30.0
    max_parallel: int = 4
    auth_env: Optional[str] = None
    backend_id: Optional[str] = None
    strict: bool = True

    def __post_init__(self):
        if self.kind not in ("mock", "http"):
            raise CredalError(f"unknown backend kind {self.kind!r}")
        if self.top_k < 1 or self.max_parallel < 1:
            raise CredalError("top_k and max_parallel must be positive")


class Backend(Protocol):
    backend_id: str

    def next_token_distribution(
        self, prompt: Prompt, prefix: tuple[str, ...] = ()
    ) -> TokenDistribution: ...

    def tokenize(self, surface: str) -> tuple[str, ...]: ...


def default_tokenize(surface: str) -> tuple[str, ...]:
    """Whitespace tokenization with BPE-style leading spaces.

    Each chunk keeps the single space that precedes it, so "of course"
    becomes ("of", " course") and " Yes" stays one token.
    """
    return tuple(re.findall(r" ?[^ ]+", surface))


# ---------------------------------------------------------------------------
# Prompt construction
# ---------------------------------------------------------------------------


def render_formula(f: Formula, registry: AtomRegistry) -> str:
    """English rendering used inside probe prompts.

    Compound subclauses are set off with a comma before the connective, the
    textual stand-in for parentheses.
    """

    def check(atom: Atom) -> str:
        if registry.surface(atom.id) != atom.surface:
            raise UnrenderableFormulaError(
                f"atom {atom.id!r} is not registered with surface {atom.surface!r}"
            )
        return atom.surface

    def compound(node: Formula) -> bool:
        return isinstance(node, (And, Or, Implies))

    def render(node: Formula) -> str:
        if isinstance(node, Atom):
            return check(node)
        if isinstance(node, Not):
            return "it is not the case that " + render(node.operand)
        sep = ", " if compound(node.left) or compound(node.right) else " "
        if isinstance(node, And):
            return f"{render(node.left)}{sep}and {render(node.right)}"
        if isinstance(node, Or):
            return f"{render(node.left)}{sep}or {render(node.right)}"
        return f"if {render(node.left)}{sep}then {render(node.right)}"

    return render(f)


def build_prompt(
    f: Formula,
    registry: AtomRegistry,
    template_id: str = TEMPLATE_DEFAULT,
) -> Prompt:
    """Deterministic question prompt for a renderable formula."""
    body = render_formula(f, registry)
    if template_id == TEMPLATE_DEFAULT:
        return Prompt(f"Is it the case that {body}?", template_id)
    if template_id == TEMPLATE_BINARY:
        return Prompt(f"Is it the case that {body}?{_BINARY_SUFFIX}", template_id)
    raise CredalError(f"unknown prompt template {template_id!r}")


# ---------------------------------------------------------------------------
# Sequence probability (chain rule)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SequenceProbability:
    value: float
    approximate: bool


def sequence_probability(
    backend: Backend, prompt: Prompt, tokens: tuple[str, ...]
) -> SequenceProbability:
    """Chain-rule probability of a token sequence after a prompt.

    Tokens missing from an itemized head contribute the residual as an upper
    bound and taint the result as approximate.
    """
    if len(tokens) < 1:
        raise CredalError("sequence_probability requires at least one token")
    value = 1.0
    approximate = False
    for i, token in enumerate(tokens):
        distribution = backend.next_token_distribution(prompt, tuple(tokens[:i]))
        prob, itemized = distribution.probability(token)
        value *= prob
        if not itemized and prob > 0.0:
            approximate = True
        if value == 0.0:
            break
    return SequenceProbability(value, approximate)


# ---------------------------------------------------------------------------
# Mock backend
# ---------------------------------------------------------------------------


def script_key(prompt_text: str, prefix: tuple[str, ...] = ()) -> str:
    """Canonical JSON key for one scripted context."""
    return json.dumps([prompt_text, list(prefix)], ensure_ascii=False, separators=(",", ":"))


def derive_backend_id(
    config: BackendConfig, script: Optional[Mapping[str, Any]] = None
) -> str:
    """The id a backend built from this config will carry.

    Exposed so callers can compute probe-store keys without instantiating
    the backend.  Mock ids hash the script, so editing a script invalidates
    cached probes.
    """
    if config.backend_id is not None:
        return config.backend_id
    if config.kind == "mock":
        digest = hashlib.sha256(
            json.dumps(script or {}, sort_keys=True).encode("utf-8")
        ).hexdigest()
        return f"mock:{digest[:12]}"
    return f"http:{config.endpoint}"


def _parse_script_value(value: Mapping[str, Any]) -> TokenDistribution:
    if "entries" in value and isinstance(value["entries"], Mapping):
        entries = {str(t): float(p) for t, p in value["entries"].items()}
        residual = float(value.get("residual", 1.0 - math.fsum(entries.values())))
    else:
        entries = {str(t): float(p) for t, p in value.items()}
        residual = 1.0 - math.fsum(entries.values())
    if -EPS_NORM <= residual < 0.0:
        residual = 0.0
    return TokenDistribution(entries, residual)


def parse_script(
    raw: Mapping[str, Mapping[str, Any]]
) -> dict[tuple[str, tuple[str, ...]], TokenDistribution]:
    """Script file contents -> context table.

    Keys are either the canonical ``script_key`` form or, as a shorthand for
    the empty prefix, the bare prompt text.
    """
    table = {}
    for key, value in raw.items():
        prompt_text, prefix = key, ()
        if key.startswith("["):
            try:
                decoded = json.loads(key)
            except json.JSONDecodeError:
                decoded = None
            if (
                isinstance(decoded, list)
                and len(decoded) == 2
                and isinstance(decoded[0], str)
                and isinstance(decoded[1], list)
            ):
                prompt_text = decoded[0]
                prefix = tuple(str(t) for t in decoded[1])
        table[(prompt_text, prefix)] = _parse_script_value(value)
    return table


class MockBackend:
    """Deterministic scripted backend; bit-reproducible and pure."""

    def __init__(
        self,
        script: Mapping[str, Mapping[str, Any]],
        backend_id: Optional[str] = None,
        strict: bool = True,
    ):
        self._table = parse_script(script)
        self._strict = strict
        self.backend_id = backend_id or derive_backend_id(
            BackendConfig(kind="mock"), script
        )

    def next_token_distribution(
        self, prompt: Prompt, prefix: tuple[str, ...] = ()
    ) -> TokenDistribution:
        try:
            return self._table[(prompt.text, tuple(prefix))]
        except KeyError:
            if self._strict:
                raise UnscriptedContextError(
                    f"no script for prompt {prompt.text!r} with prefix {list(prefix)!r}",
                    prompt=prompt,
                ) from None
            return TokenDistribution({}, residual=1.0)

    def tokenize(self, surface: str) -> tuple[str, ...]:
        return default_tokenize(surface)

    @classmethod
    def from_file(cls, path: str, **kwargs) -> "MockBackend":
        with open(path, "r", encoding="utf-8") as handle:
            return cls(json.load(handle), **kwargs)


# ---------------------------------------------------------------------------
# HTTP backend
# ---------------------------------------------------------------------------

DEFAULT_FIELD_NAMES = {
    "prompt": "prompt",
    "max_tokens": "max_tokens",
    "logprobs": "logprobs",
    "response": "logprobs",
}


class HttpBackend:
    """Generic client for logprob-serving HTTP APIs.

    Sends ``POST {prompt, max_tokens: 1, logprobs: k}`` and reads an array of
    (token, logprob) pairs for the next position; logprobs are exponentiated
    and the unitemized mass becomes the residual.  Field names are
    configurable for APIs that spell them differently.  Surfaces are
    tokenized with the package's whitespace heuristic since serving APIs do
    not expose their tokenizer.
    """

    def __init__(
        self,
        config: BackendConfig,
        field_names: Optional[Mapping[str, str]] = None,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        if config.kind != "http" or not config.endpoint:
            raise CredalError("HttpBackend needs kind='http' and an endpoint")
        self.config = config
        self.fields = dict(DEFAULT_FIELD_NAMES)
        if field_names:
            self.fields.update(field_names)
        self.backend_id = derive_backend_id(config)
        self._semaphore = threading.BoundedSemaphore(config.max_parallel)
        self._client = httpx.Client(timeout=config.timeout_s, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> dict[str, str]:
        headers = {}
        if self.config.auth_env:
            token = os.environ.get(self.config.auth_env)
            if not token:
                raise BackendError(
                    f"auth environment variable {self.config.auth_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def next_token_distribution(
        self, prompt: Prompt, prefix: tuple[str, ...] = ()
    ) -> TokenDistribution:
        payload = {
            self.fields["prompt"]: prompt.text + "".join(prefix),
            self.fields["max_tokens"]: 1,
            self.fields["logprobs"]: self.config.top_k,
        }
        try:
            with self._semaphore:
                response = self._client.post(
                    self.config.endpoint, json=payload, headers=self._headers()
                )
        except httpx.TimeoutException as exc:
            raise BackendTimeoutError(
                f"timed out after {self.config.timeout_s}s for prompt "
                f"{prompt.text!r} (template {prompt.template_id})",
                prompt=prompt,
            ) from exc
        except httpx.HTTPError as exc:
            raise BackendError(f"transport failure: {exc}", prompt=prompt) from exc
        if response.status_code != 200:
            raise BackendError(
                f"backend returned HTTP {response.status_code}", prompt=prompt
            )
        try:
            pairs = response.json()[self.fields["response"]]
        except (KeyError, ValueError) as exc:
            raise BackendError(f"malformed backend response: {exc}", prompt=prompt) from exc

        entries: dict[str, float] = {}
        for pair in pairs:
            if isinstance(pair, Mapping):
                token, logprob = pair["token"], pair["logprob"]
            else:
                token, logprob = pair
            entries[str(token)] = math.exp(float(logprob))
        residual = 1.0 - math.fsum(entries.values())
        if residual < 0.0:
            if residual < -EPS_NORM:
                raise NormalizationError(
                    f"itemized mass {1.0 - residual!r} exceeds 1", prompt=prompt
                )
            residual = 0.0
        return TokenDistribution(entries, residual)

    def tokenize(self, surface: str) -> tuple[str, ...]:
        return default_tokenize(surface)


def make_backend(
    config: BackendConfig,
    script: Optional[Mapping[str, Mapping[str, Any]]] = None,
    field_names: Optional[Mapping[str, str]] = None,
    transport: Optional[httpx.BaseTransport] = None,
) -> Backend:
    if config.kind == "mock":
        if script is None:
            raise CredalError("mock backend requires a script")
        return MockBackend(script, backend_id=config.backend_id, strict=config.strict)
    return HttpBackend(config, field_names=field_names, transport=transport)

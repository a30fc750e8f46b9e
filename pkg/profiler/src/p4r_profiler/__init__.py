"""Item-profile toolchain: prompt construction, LLM-backed profile
generation with an offline canned endpoint, and profile encoding into
the recommender's embedding file formats."""

from .encode import (
    BINARY_MAGIC,
    BINARY_VERSION,
    EncoderError,
    HashingEncoder,
    encode_profiles,
    get_encoder,
    write_embeddings_binary,
    write_embeddings_jsonl,
)
from .llm import CannedEndpoint, DecodeSettings, EndpointError, HttpChatEndpoint
from .metadata import ItemMetadata, MetadataError, load_item_metadata
from .profiles import (
    ItemProfile,
    ProfileError,
    generate_profile,
    generate_profiles,
    parse_sections,
    read_profiles_jsonl,
    write_profiles_jsonl,
)
from .prompts import (
    DEFAULT_TEMPLATE,
    SECTION_MARKERS,
    PromptError,
    PromptSpec,
    PromptTemplate,
    build_prompt,
    build_prompt_spec,
)

__all__ = [
    "BINARY_MAGIC",
    "BINARY_VERSION",
    "CannedEndpoint",
    "DEFAULT_TEMPLATE",
    "DecodeSettings",
    "EncoderError",
    "EndpointError",
    "HashingEncoder",
    "HttpChatEndpoint",
    "ItemMetadata",
    "ItemProfile",
    "MetadataError",
    "ProfileError",
    "PromptError",
    "PromptSpec",
    "PromptTemplate",
    "SECTION_MARKERS",
    "build_prompt",
    "build_prompt_spec",
    "encode_profiles",
    "generate_profile",
    "generate_profiles",
    "get_encoder",
    "load_item_metadata",
    "parse_sections",
    "read_profiles_jsonl",
    "write_embeddings_binary",
    "write_embeddings_jsonl",
    "write_profiles_jsonl",
]

//! Attribute taxonomy, comparison rules and the source registry.

mod comparator;
mod registry;
mod schema;
mod value;

pub use comparator::{compare_attribute, ComparatorSpec, CompareError, LookupEntry, Score};
pub use registry::{
    load_registry, Override, RawSource, Registry, RegistryDocument, RegistryError,
    SourceDescriptor, Weights,
};
pub use schema::{AttributeDef, AttributeSchema, Category};
pub use value::{
    format_rate, format_span, parse_rate, parse_span, AttributeValue, Span, ValueKind,
};

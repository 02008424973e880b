pub mod curie_weiss;
pub mod wasp;

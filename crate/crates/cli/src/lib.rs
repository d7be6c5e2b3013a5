//! Library surface of the `kur` command-line tool: the JSON document model
//! (`dto`) and the subcommand implementations (`commands`).

pub mod commands;
pub mod dto;

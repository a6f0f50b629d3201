"use strict";
/** Wire types of the session service (versioned JSON, /api/v1). */
Object.defineProperty(exports, "__esModule", { value: true });

package org.example.wiki;

import java.util.HashMap;
import java.util.Map;

/**
 * Caches the datatype of properties seen while processing statements.
 */
public class PropertyRegister {

    public static final String DT_STRING = "http://wikiba.se/ontology#String";

    private final Map<String, String> datatypes = new HashMap<>();

    public String getPropertyType(String propertyId) {
        return datatypes.get(propertyId);
    }

    /**
     * Registers the string datatype for a property whose value is a string.
     */
    public String setPropertyTypeFromStringValue(String propertyId, String value) {
        String type = DT_STRING;
        datatypes.put(propertyId, type);
        return type;
    }
}
